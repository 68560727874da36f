import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bec3 import potentials as P  # noqa: E402
from bec3 import scattering as S  # noqa: E402


def six_d_test_potential():
    """Isotropic-after-M gaussian well outside the weak-coupling regime (b/int V ~ 0.8)."""
    return P.isotropic_after_M(P.gaussian(6, 100.0, 0.4, cutoff=2.5))


class SixDCache:
    """Lazily computed 16^6 grid solves shared by the grid and acceptance tests."""

    def __init__(self):
        self._store = {}
        self.V = six_d_test_potential()

    def get(self, key):
        if key not in self._store:
            method, ell = key
            V = self.V if ell == 1.0 else self.V.scaled(ell)
            t0 = time.perf_counter()
            if method == "radial":
                sol = S.b_modified(V, "radial")
            else:
                sol = S.b_modified(V, method, points=16)
            self._store[key] = (sol, time.perf_counter() - t0)
        return self._store[key]


@pytest.fixture(scope="session")
def six_d():
    return SixDCache()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
