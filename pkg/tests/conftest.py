import pytest

from afcsim.calibration import calibrate
from afcsim.experiments import oracle_grid


@pytest.fixture(scope="session")
def calibration():
    return calibrate()


@pytest.fixture(scope="session")
def grid():
    return oracle_grid()


@pytest.fixture(scope="session")
def calibration_file(tmp_path_factory, calibration):
    path = tmp_path_factory.mktemp("cal") / "calibration.ini"
    calibration.save(path)
    return path


# one summary line per acceptance criterion
_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(number: int, ok: bool, detail: str):
        _CRITERIA[number] = (bool(ok), detail)
        assert ok, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
