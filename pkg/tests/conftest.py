import numpy as np
import pytest

from qvort.grid import GridSpec, WaveField

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def acceptance(request):
    """Record ``(criterion, ok, detail)``; the lines are printed in the terminal summary."""
    store = request.config.stash[_RESULTS]

    def record(num: int, ok: bool, detail: str):
        line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        store.setdefault(num, []).append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_RESULTS, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(store):
        for line in store[num]:
            terminalreporter.write_line(line)


@pytest.fixture
def sin_field_2d():
    """Four nulls at off-lattice positions: charges +1, -1, -1, +1."""
    g = GridSpec(2, 64)
    x0, y0 = 0.3 * g.dx, 0.17 * g.dx
    X, Y = g.mesh()
    psi = np.sin(2 * np.pi * (X - x0)) + 1j * np.sin(2 * np.pi * (Y - y0))
    return WaveField(g, psi), (x0, y0)
