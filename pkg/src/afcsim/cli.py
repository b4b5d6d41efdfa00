"""Command-line entry point.

Exit status: 0 when every contract passes, 2 when a contract fails, 1 on any
error (bad arguments, bad config, failed computation).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .calibration import Calibration, calibrate
from .config import default_config, needs_calibration, parse_config, run_experiment, with_overrides
from .errors import AFCError, CalibrationMissingError, ConfigError
from .experiments import EXPERIMENTS

EXIT_OK, EXIT_ERROR, EXIT_CONTRACT = 0, 1, 2
OUT_ENV = "AFCSIM_OUT"
CALIBRATION_FILE = "calibration.ini"

log = logging.getLogger("afcsim")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def output_root(explicit: str | None = None) -> Path:
    return Path(explicit or os.environ.get(OUT_ENV) or "afcsim-out")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="afcsim", description="Atomic frequency comb memory simulator.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("experiment", choices=EXPERIMENTS)
    run.add_argument("--config", type=Path, help="INI config file")
    run.add_argument("--out", type=Path, help=f"output directory (default: ${OUT_ENV}/<label>)")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--trials", type=int, help="override detection n_trials")
    run.add_argument("--calibration", type=Path, help="calibration file (created if missing)")
    run.add_argument("--quiet", action="store_true")

    cal = sub.add_parser("calibrate", help="fit the pump strength and long-comb resolution")
    cal.add_argument("--calibration", type=Path, help=f"where to write (default: ${OUT_ENV}/{CALIBRATION_FILE})")
    cal.add_argument("--quiet", action="store_true")

    sub.add_parser("list", help="list experiments")
    return parser


def _calibration_path(arg: Path | None) -> Path:
    return arg if arg is not None else output_root() / CALIBRATION_FILE


def load_or_calibrate(path: Path) -> Calibration:
    try:
        return Calibration.load(path)
    except CalibrationMissingError:
        log.info("no calibration at %s; calibrating", path)
        cal = calibrate()
        path.parent.mkdir(parents=True, exist_ok=True)
        cal.save(path)
        return cal


def cmd_run(args) -> int:
    if args.seed is not None and not 0 <= args.seed < 2**64:
        raise ConfigError(["--seed must lie in [0, 2^64)"])
    if args.trials is not None and args.trials < 1:
        raise ConfigError(["--trials must be >= 1"])
    cfg = parse_config(args.config) if args.config else default_config(args.experiment)
    if cfg.experiment != args.experiment:
        raise ConfigError([f"config is for {cfg.experiment!r}, command asked for {args.experiment!r}"])
    cfg = with_overrides(cfg, args.seed, args.trials)
    cal = load_or_calibrate(_calibration_path(args.calibration)) if needs_calibration(cfg.experiment) else None
    result = run_experiment(cfg, cal)
    out = args.out if args.out is not None else output_root() / f"{cfg.output_label}-seed{cfg.seed}"
    result.write(out)
    for name, ok in sorted(result.contracts.items()):
        log.info("%-40s %s", name, "pass" if ok else "FAIL")
    log.info("wrote %s", out / "manifest.txt")
    return EXIT_OK if result.passed else EXIT_CONTRACT


def cmd_calibrate(args) -> int:
    path = _calibration_path(args.calibration)
    cal = calibrate()
    path.parent.mkdir(parents=True, exist_ok=True)
    cal.save(path)
    log.info("kappa=%.6g long_resolution=%.6g MHz (d=%.3f F=%.3f d0=%.3f)",
             cal.kappa, cal.long_resolution, cal.fit_d, cal.fit_F, cal.fit_d0)
    log.info("wrote %s", path)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    if args.command == "list":
        print("\n".join(EXPERIMENTS))
        return EXIT_OK
    try:
        return cmd_run(args) if args.command == "run" else cmd_calibrate(args)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_ERROR
    except (AFCError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
