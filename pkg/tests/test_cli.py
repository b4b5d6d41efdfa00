import subprocess
import sys
from textwrap import dedent

import pytest

from afcsim.cli import main
from afcsim.config import default_config, parse_config, with_overrides
from afcsim.errors import ConfigError


@pytest.fixture
def out_root(tmp_path, monkeypatch):
    monkeypatch.setenv("AFCSIM_OUT", str(tmp_path / "out"))
    return tmp_path / "out"


def write(path, text):
    path.write_text(dedent(text).lstrip())
    return path


def test_list(capsys):
    assert main(["list"]) == 0
    names = capsys.readouterr().out.split()
    assert "multimode64" in names and "finesse_study" in names and len(names) == 6


def test_unknown_subcommand_exits_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_experiment_exits_1():
    with pytest.raises(SystemExit) as exc:
        main(["run", "teleport"])
    assert exc.value.code == 1


def test_finesse_study_writes_table(out_root):
    assert main(["run", "finesse_study", "--quiet", "--out", str(out_root / "fs")]) == 0
    header = (out_root / "fs" / "finesse_table.csv").read_text().splitlines()[0]
    assert "F_star" in header.split(",")
    assert "passed = true" in (out_root / "fs" / "manifest.txt").read_text()


def test_manifests_are_byte_identical(out_root, calibration_file):
    args = ["run", "multimode64", "--seed", "7", "--quiet", "--calibration", str(calibration_file)]
    assert main(args + ["--out", str(out_root / "a")]) == 0
    assert main(args + ["--out", str(out_root / "b")]) == 0
    a = (out_root / "a" / "manifest.txt").read_bytes()
    b = (out_root / "b" / "manifest.txt").read_bytes()
    assert a == b
    assert b"seed = 7" in a


def test_default_output_dir_uses_env(out_root):
    assert main(["run", "finesse_study", "--quiet", "--seed", "4"]) == 0
    assert (out_root / "finesse_study-seed4" / "manifest.txt").exists()


def test_minimal_config_gets_defaults(tmp_path):
    cfg = parse_config(write(tmp_path / "m.ini", """
        [experiment]
        id = multimode64
    """))
    ref = default_config("multimode64")
    assert cfg.parameters == ref.parameters
    assert cfg.detection == ref.detection


def test_config_errors_carry_line_numbers(tmp_path):
    path = write(tmp_path / "bad.ini", """
        [experiment]
        id = bandwidth_sweep
        seed = -3

        [parameters]
        delta = 1.0
        shifts_five = 0, 20.5
        colour = blue

        [detection]
        dark_rate = -1
    """)
    with pytest.raises(ConfigError) as exc:
        parse_config(path)
    text = "\n".join(exc.value.problems)
    assert len(exc.value.problems) >= 4
    assert f"{path}:3:" in text  # seed
    assert f"{path}:7:" in text  # shift not a multiple of delta
    assert f"{path}:8:" in text  # unknown key
    assert f"{path}:11:" in text  # detection


def test_bad_config_exits_1_and_lists_problems(tmp_path, capsys):
    path = write(tmp_path / "bad.ini", """
        [experiment]
        id = multimode64

        [parameters]
        pattern = stripes
        pulse_fwhm = -1
    """)
    assert main(["run", "multimode64", "--config", str(path)]) == 1
    err = capsys.readouterr().err
    assert err.count("config error:") == 2


def test_config_for_other_experiment_exits_1(tmp_path, capsys):
    path = write(tmp_path / "c.ini", """
        [experiment]
        id = finesse_study
    """)
    assert main(["run", "multimode64", "--config", str(path)]) == 1
    assert "config error" in capsys.readouterr().err


def test_contract_failure_exits_2(tmp_path, out_root, calibration_file):
    # a "five carrier" set with one carrier cannot keep the short pulses
    path = write(tmp_path / "bw.ini", """
        [experiment]
        id = bandwidth_sweep

        [parameters]
        shifts_five = 0
    """)
    code = main(["run", "bandwidth_sweep", "--config", str(path), "--quiet",
                 "--calibration", str(calibration_file), "--out", str(out_root / "bw")])
    assert code == 2
    assert "passed = false" in (out_root / "bw" / "manifest.txt").read_text()


def test_overrides():
    cfg = with_overrides(default_config("multimode64"), seed=11, trials=500)
    assert cfg.seed == 11
    assert cfg.detection.n_trials == 500
    assert cfg.detection.rng_seed == 11


def test_bad_trials_override_exits_1(capsys):
    assert main(["run", "finesse_study", "--trials", "0"]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "afcsim", "list"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "interference" in proc.stdout
