"""Experiment configuration files and dispatch.

Files are INI-style ``key = value`` sections::

    [experiment]
    id = multimode64
    seed = 7
    label = demo

    [parameters]
    pattern = random01

    [detection]
    n_trials = 1000000

    [material]
    gamma_eff = 1.0

Lists are comma-separated. Every key is optional except ``[experiment] id``.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .calibration import Calibration
from .detection import DetectionConfig
from .errors import ConfigError, SequenceError
from .experiments import (
    EXPERIMENTS,
    ExperimentResult,
    run_arbitrary_waveform,
    run_bandwidth_sweep,
    run_finesse_study,
    run_interference,
    run_multimode64,
    run_storage_time_sweep,
)
from .preparation import _check_multiple, shifts_for_bandwidth
from .spectral import MaterialParams

FLOAT, INT, STR, FLOATS = "float", "int", "str", "floats"

# name -> (kind, default); None means "derived from other parameters"
PARAMETERS: dict[str, dict[str, tuple[str, object]]] = {
    "storage_time_sweep": {
        "deltas": (FLOATS, [10.0, 5.0, 3.0, 2.0, 1.5, 1.0]),
        "input_fwhm": (FLOAT, 0.01),
    },
    "bandwidth_sweep": {
        "delta": (FLOAT, 1.0),
        "pulse_fwhms": (FLOATS, [0.005, 0.0075, 0.01, 0.02, 0.05, 0.1]),
        "shifts_single": (FLOATS, [0.0]),
        "shifts_five": (FLOATS, None),
    },
    "multimode64": {
        "pattern": (STR, "random01"),
        "amplitudes": (FLOATS, None),
        "storage_time": (FLOAT, 1.32),
        "separation": (FLOAT, 0.02),
        "pulse_fwhm": (FLOAT, 0.005),
        "n_carriers": (INT, 5),
    },
    "interference": {
        "phi_comb": (FLOAT, math.pi),
        "storage1": (FLOAT, 1.2),
        "storage2": (FLOAT, 1.32),
        "separation": (FLOAT, 0.12),
        "pulse_fwhm": (FLOAT, 0.02),
        "window_half_width": (FLOAT, 0.03),
    },
    "arbitrary_waveform": {
        "duration": (FLOAT, 1.0),
        "knot_spacing": (FLOAT, 0.025),
        "knot_fwhm": (FLOAT, 0.03),
        "storage_time": (FLOAT, 1.32),
    },
    "finesse_study": {
        "d_values": (FLOATS, [0.0, 0.5, 1.0, 1.7, 2.0, 3.0]),
        "d0": (FLOAT, 0.0),
        "check_finesse": (FLOATS, [2.0, 2.7, 4.0, 6.0, 10.0]),
    },
}

# per-experiment detection defaults on top of DetectionConfig's
DETECTION_DEFAULTS = {
    "multimode64": {"mean_photons": 0.5, "n_trials": 10**6},
    "interference": {"mean_photons": 1.8, "n_trials": 10**7},
    "arbitrary_waveform": {"mean_photons": 4.0, "n_trials": 10**5, "bin_width": 10.0},
}

PATTERNS = ("random01", "all_ones", "modulated")
N_MODES = 64


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    label: str = ""
    parameters: dict = field(default_factory=dict)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    material: MaterialParams = field(default_factory=MaterialParams)

    @property
    def output_label(self) -> str:
        return self.label or self.experiment


def default_config(experiment: str, seed: int = 0) -> ExperimentConfig:
    if experiment not in EXPERIMENTS:
        raise ConfigError([f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}"])
    params = {k: v for k, (_, v) in PARAMETERS[experiment].items()}
    det = DetectionConfig(**DETECTION_DEFAULTS.get(experiment, {}), rng_seed=seed)
    return ExperimentConfig(experiment, seed, "", _fill_derived(experiment, params), det, MaterialParams())


def _fill_derived(experiment: str, params: dict) -> dict:
    params = dict(params)
    if experiment == "bandwidth_sweep" and params.get("shifts_five") is None:
        params["shifts_five"] = shifts_for_bandwidth(params["delta"])
    return params


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Map (section, key) to its 1-based line number."""
    where, section = {}, None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            where.setdefault((section, ""), n)
        elif section is not None:
            key = line.split("=", 1)[0].split(":", 1)[0].strip().lower()
            where[(section, key)] = n
    return where


def _convert(kind: str, raw: str):
    if kind == FLOAT:
        return float(raw)
    if kind == INT:
        return int(raw)
    if kind == FLOATS:
        items = [x.strip() for x in raw.split(",") if x.strip()]
        if not items:
            raise ValueError("empty list")
        return [float(x) for x in items]
    return raw.strip()


_DET_KINDS = {"mean_photons": FLOAT, "det_efficiency": FLOAT, "dark_rate": FLOAT, "path_transmission": FLOAT,
              "n_trials": INT, "bin_width": FLOAT}
_MAT_KINDS = {f.name: (INT if f.name == "passes" else FLOAT) for f in fields(MaterialParams)}


def parse_config(path: str | Path) -> ExperimentConfig:
    """Read and fully validate a configuration file.

    Raises ConfigError listing every problem found, each prefixed with its
    line number and ``[section] key`` where that applies.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read config ({exc.strerror})"]) from None
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        if lineno is None and getattr(exc, "errors", None):
            lineno = exc.errors[0][0]
        prefix = f"{path}:{lineno}: " if lineno else f"{path}: "
        raise ConfigError([prefix + "parse error: " + str(exc).splitlines()[0]]) from None
    return _validate(cp, _key_lines(text), str(path))


def _validate(cp: configparser.ConfigParser, lines: dict, source: str) -> ExperimentConfig:
    problems: list[str] = []

    def loc(section, key=""):
        n = lines.get((section, key)) or lines.get((section, ""))
        where = f"{source}:{n}" if n else source
        return f"{where}: [{section}]" + (f" {key}" if key else "")

    allowed = {"experiment", "parameters", "detection", "material"}
    for sec in cp.sections():
        if sec not in allowed:
            problems.append(f"{loc(sec)}: unknown section (expected one of {', '.join(sorted(allowed))})")

    if not cp.has_section("experiment") or not cp.get("experiment", "id", fallback="").strip():
        problems.append(f"{loc('experiment', 'id')}: missing experiment id")
        raise ConfigError(problems)
    exp = cp.get("experiment", "id").strip()
    if exp not in EXPERIMENTS:
        problems.append(f"{loc('experiment', 'id')}: unknown experiment {exp!r}; choose from {', '.join(EXPERIMENTS)}")
        raise ConfigError(problems)
    base = default_config(exp)

    seed = 0
    for key, raw in cp.items("experiment"):
        if key == "seed":
            try:
                seed = int(raw)
                if not 0 <= seed < 2**64:
                    raise ValueError
            except ValueError:
                problems.append(f"{loc('experiment', key)}: seed must be an integer in [0, 2^64), got {raw!r}")
        elif key not in ("id", "label"):
            problems.append(f"{loc('experiment', key)}: unknown key")
    label = cp.get("experiment", "label", fallback="").strip()

    def read_section(section, kinds):
        out = {}
        if not cp.has_section(section):
            return out
        for key, raw in cp.items(section):
            if key not in kinds:
                problems.append(f"{loc(section, key)}: unknown key (expected one of {', '.join(sorted(kinds))})")
                continue
            try:
                out[key] = _convert(kinds[key], raw)
            except ValueError:
                problems.append(f"{loc(section, key)}: expected {kinds[key]}, got {raw!r}")
        return out

    schema = PARAMETERS[exp]
    given = read_section("parameters", {k: kind for k, (kind, _) in schema.items()})
    params = {k: v for k, (_, v) in schema.items()}
    params.update(given)
    params = _fill_derived(exp, params)
    problems += [f"{loc('parameters', k)}: {msg}" for k, msg in _check_parameters(exp, params)]

    det_kw = {f.name: getattr(base.detection, f.name) for f in fields(DetectionConfig)}
    det_kw.update(read_section("detection", _DET_KINDS))
    det_kw["rng_seed"] = seed
    detection = None
    try:
        detection = DetectionConfig(**det_kw)
    except ValueError as exc:
        problems += [f"{loc('detection', p.split()[0])}: {p}" for p in str(exc).split("; ")]

    mat_kw = read_section("material", _MAT_KINDS)
    material = None
    try:
        material = MaterialParams(**mat_kw)
    except ValueError as exc:
        problems.append(f"{loc('material', str(exc).split()[0])}: {exc}")

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(exp, seed, label, params, detection, material)


def _check_parameters(exp: str, p: dict) -> list[tuple[str, str]]:
    bad = []

    def positive(*names):
        for n in names:
            v = p[n]
            vals = v if isinstance(v, list) else [v]
            if v is not None and not all(x > 0 for x in vals):
                bad.append((n, "must be > 0"))

    if exp == "storage_time_sweep":
        positive("deltas", "input_fwhm")
    elif exp == "bandwidth_sweep":
        positive("delta", "pulse_fwhms")
        if p["delta"] > 0:
            for name in ("shifts_single", "shifts_five"):
                for s in p[name]:
                    try:
                        _check_multiple(s, p["delta"])
                    except SequenceError as exc:
                        bad.append((name, str(exc)))
    elif exp == "multimode64":
        positive("storage_time", "separation", "pulse_fwhm", "n_carriers")
        if p["pattern"] not in PATTERNS:
            bad.append(("pattern", f"must be one of {', '.join(PATTERNS)}, got {p['pattern']!r}"))
        if p["amplitudes"] is not None:
            if len(p["amplitudes"]) != N_MODES:
                bad.append(("amplitudes", f"need {N_MODES} values, got {len(p['amplitudes'])}"))
            if any(a < 0 for a in p["amplitudes"]):
                bad.append(("amplitudes", "must be >= 0"))
    elif exp == "interference":
        positive("storage1", "storage2", "separation", "pulse_fwhm", "window_half_width")
        if abs(p["storage2"] - p["storage1"] - p["separation"]) > 1e-9:
            bad.append(("separation", f"must equal storage2 - storage1 = {p['storage2'] - p['storage1']:.6g} us"))
    elif exp == "arbitrary_waveform":
        positive("duration", "knot_spacing", "knot_fwhm", "storage_time")
    elif exp == "finesse_study":
        if any(d < 0 for d in p["d_values"]):
            bad.append(("d_values", "must be >= 0"))
        if p["d0"] < 0:
            bad.append(("d0", "must be >= 0"))
        if any(f <= 1 for f in p["check_finesse"]):
            bad.append(("check_finesse", "must be > 1"))
    return bad


def with_overrides(cfg: ExperimentConfig, seed: int | None = None, trials: int | None = None) -> ExperimentConfig:
    det = cfg.detection
    if seed is not None:
        cfg = replace(cfg, seed=seed)
        det = replace(det, rng_seed=seed)
    if trials is not None:
        det = replace(det, n_trials=trials)
    return replace(cfg, detection=det)


def run_experiment(cfg: ExperimentConfig, calibration: Calibration | None = None) -> ExperimentResult:
    p, det, mat, seed = cfg.parameters, cfg.detection, cfg.material, cfg.seed
    if cfg.experiment == "storage_time_sweep":
        return run_storage_time_sweep(p["deltas"], calibration, input_fwhm=p["input_fwhm"], material=mat, seed=seed)
    if cfg.experiment == "bandwidth_sweep":
        sets = {"single": p["shifts_single"], "five": p["shifts_five"]}
        return run_bandwidth_sweep(p["pulse_fwhms"], sets, calibration, delta=p["delta"], material=mat, seed=seed)
    if cfg.experiment == "multimode64":
        pattern = p["amplitudes"] if p["amplitudes"] is not None else p["pattern"]
        return run_multimode64(pattern, seed, calibration, storage_time=p["storage_time"],
                               separation=p["separation"], pulse_fwhm=p["pulse_fwhm"], n_carriers=p["n_carriers"],
                               detection=det, material=mat)
    if cfg.experiment == "interference":
        return run_interference(p["phi_comb"], seed, calibration, storage1=p["storage1"], storage2=p["storage2"],
                                separation=p["separation"], pulse_fwhm=p["pulse_fwhm"],
                                window_half_width=p["window_half_width"], detection=det, material=mat)
    if cfg.experiment == "arbitrary_waveform":
        return run_arbitrary_waveform(seed, calibration, duration=p["duration"], knot_spacing=p["knot_spacing"],
                                      knot_fwhm=p["knot_fwhm"], storage_time=p["storage_time"], detection=det,
                                      material=mat)
    if cfg.experiment == "finesse_study":
        return run_finesse_study(p["d_values"], p["d0"], check_finesse=p["check_finesse"], seed=seed)
    raise ConfigError([f"unknown experiment {cfg.experiment!r}"])


def needs_calibration(experiment: str) -> bool:
    return experiment != "finesse_study"
