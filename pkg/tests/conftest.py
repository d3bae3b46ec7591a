import numpy as np
import pytest

from concavex.shocks import ShockDistribution
from concavex.utility import CARA, CRRA, HARA, CRRAMixture


def bisect_oracle(f, lo, hi, iters=200):
    """Plain scalar bisection for a sign change of f on [lo, hi]."""
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def random_instance(rng, n_min=2, n_max=4):
    """CRRA utility, 2-4 state shocks and a wealth level in the ranges of the Euler fidelity suite."""
    u = CRRA(rng.uniform(0.5, 5.0))
    dist = ShockDistribution.random(rng, int(rng.integers(n_min, n_max + 1)))
    w = rng.uniform(0.1, 10.0)
    return u, dist, w


def hara_family(rng):
    kind = rng.integers(4)
    if kind == 0:
        return CRRA(rng.uniform(0.3, 6.0))
    if kind == 1:
        return CARA(rng.uniform(0.2, 3.0))
    if kind == 2:
        return HARA(rng.uniform(0.1, 2.0), rng.uniform(-1.0, 1.0))
    return HARA(rng.uniform(-0.9, -0.1), rng.uniform(0.5, 3.0))


def mixture_family(rng):
    e = np.sort(rng.uniform(0.3, 6.0, size=2))
    if e[1] - e[0] < 0.2:
        e[1] += 0.5
    return CRRAMixture(tuple(rng.uniform(0.2, 3.0, size=2)), tuple(e))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
