import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE = {}


@pytest.fixture
def record():
    """Store one acceptance line: ``record(number, title, passed, detail)``."""
    def _rec(number, title, passed, detail=""):
        _ACCEPTANCE[number] = (title, bool(passed), detail)
        line = f"ACCEPTANCE {number:02d} {'PASS' if passed else 'FAIL'} {title}: {detail}"
        print(line)
        return passed
    return _rec


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[n]
        tr.write_line(f"[{n:02d}] {'PASS' if ok else 'FAIL'}  {title}  ({detail})")


@pytest.fixture(autouse=True)
def _quiet_centering():
    from apsim.elimination import CenteringWarning
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CenteringWarning)
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
