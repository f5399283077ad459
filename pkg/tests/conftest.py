import numpy as np
import pytest

from mkpls import _accel


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


BACKENDS = [pytest.param(False, id="numpy")]
if _accel.HAVE_NUMBA:
    BACKENDS.append(pytest.param(True, id="numba"))


@pytest.fixture(params=BACKENDS)
def use_numba(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            name = getattr(rep, "nodeid", "").rpartition("::")[2]
            if rep.when == "call" and name.startswith("test_criterion_"):
                k = int(name.split("_")[2])
                lines.append((k, f"criterion {k}: {outcome.upper()[:4]}  {name}"))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
