"""Euler-equation solvers for one-period and finite-horizon consumption-saving.

The one-period problem is

    max_c  u(c) + E[beta u(R (w - c) + Y)]

whose unique interior optimum solves f'(c) = u'(c) - E[beta R u'(R(w-c)+Y)] = 0
on (domain_low, c_bar). f' is strictly decreasing, so every solve is a
guaranteed sign-bracketed root search.

In the finite-horizon problem the agent consumes everything in the last
period and w_{t+1} = R (w_t - c_t) + Y must stay at or above the utility
floor (0 for CRRA). Before the last stage this floor can bind, in which case
c_t = c_bar.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from concavex._roots import BracketError, decreasing_root
from concavex.shocks import ShockDistribution
from concavex.utility import DomainError, UtilityFunction

DEFAULT_TOL = 1e-12
CONCAVITY_TOL = 1e-9
UNIFORM_RTOL = 1e-6

__all__ = [
    "DEFAULT_TOL",
    "CONCAVITY_TOL",
    "SolverError",
    "GridError",
    "PolicyFunction",
    "ConcavityReport",
    "consumption_upper_bound",
    "euler_residual",
    "solve_one_period",
    "consumption_rule",
    "mpc",
    "find_zero_saving_wealth",
    "tabulate_policy",
    "solve_finite_horizon",
    "concavity_scan",
    "second_differences",
]


class SolverError(RuntimeError):
    """The Euler equation could not be bracketed or solved."""


class GridError(ValueError):
    """Next-period wealth left the range covered by an interpolated policy."""


def scan_threads() -> int:
    try:
        return max(1, int(os.environ.get("CONCAVEX_THREADS", "1")))
    except ValueError:
        return 1


def consumption_upper_bound(w, dist: ShockDistribution, floor: float = 0.0):
    """Largest consumption keeping R_n (w - c) + Y_n >= floor in every state."""
    bound = np.asarray(w, dtype=float) + np.min((dist.Y - floor) / dist.R)
    return float(bound) if bound.ndim == 0 else bound


def _bounds(u: UtilityFunction, dist: ShockDistribution, w, floor: float):
    """Open interval of feasible consumption at wealth ``w``."""
    w = np.asarray(w, dtype=float)
    hi = np.minimum(u.domain_high, w + np.min((dist.Y - floor) / dist.R))
    lo = np.full_like(w, u.domain_low)
    if math.isfinite(u.domain_high):
        lo = np.maximum(lo, w - np.min((u.domain_high - dist.Y) / dist.R))
    return lo, hi


def _anchor(lo, hi, w):
    with np.errstate(invalid="ignore"):
        return _anchor_unchecked(lo, hi, w)


def _anchor_unchecked(lo, hi, w):
    both = np.isfinite(lo) & np.isfinite(hi)
    mid = np.where(both, 0.5 * (lo + hi), 0.0)
    only_lo = np.isfinite(lo) & ~np.isfinite(hi)
    only_hi = np.isfinite(hi) & ~np.isfinite(lo)
    mid = np.where(only_lo, lo + np.maximum(1.0, np.abs(w)), mid)
    mid = np.where(only_hi, hi - np.maximum(1.0, np.abs(w)), mid)
    mid = np.where(~np.isfinite(lo) & ~np.isfinite(hi), 0.5 * w, mid)
    return mid


def _next_wealth(dist, w, c, floor):
    xp = dist.R * (np.asarray(w)[..., None] - np.asarray(c)[..., None]) + dist.Y
    return np.maximum(xp, floor) if math.isfinite(floor) else xp


def _expected_mu(u, dist, w, c, floor, next_c):
    xp = _next_wealth(dist, w, c, floor)
    cp = xp if next_c is None else next_c(xp)
    return u.up(cp) @ (dist.pi * dist.beta * dist.R)


def _residual(u, dist, w, c, floor, next_c=None):
    return u.up(c) - _expected_mu(u, dist, w, c, floor, next_c)


def euler_residual(u: UtilityFunction, dist: ShockDistribution, w: float, c: float) -> float:
    """f'(c) = u'(c) - E[beta R u'(R (w - c) + Y)]; zero at the optimum."""
    lo, hi = _bounds(u, dist, w, u.domain_low)
    if not lo < c < hi:
        raise DomainError(f"consumption {c} outside the feasible interval ({float(lo)}, {float(hi)})")
    return float(_residual(u, dist, w, c, u.domain_low))


def _solve(u, dist, w, tol, floor, next_c=None):
    w = np.asarray(w, dtype=float)
    lo, hi = _bounds(u, dist, w, floor)
    if np.any(~(lo < hi)):
        raise SolverError(f"empty feasible consumption set at wealth {w[~(lo < hi)][:3].tolist()}")
    c = np.empty_like(w)
    corner = np.zeros(w.shape, dtype=bool)
    if next_c is not None:
        with np.errstate(all="ignore"):
            f_hi = _residual(u, dist, w, hi, floor, next_c)
        corner = np.isfinite(hi) & (f_hi >= 0)
        c[corner] = hi[corner]
    inner = ~corner
    if inner.any():
        f = lambda cc, ww: _residual(u, dist, ww, cc, floor, next_c)  # noqa: E731
        try:
            c[inner] = decreasing_root(f, lo[inner], hi[inner], _anchor(lo[inner], hi[inner], w[inner]),
                                       args=(w[inner],), xrtol=tol)
        except BracketError as exc:
            raise SolverError(
                f"Euler equation has no sign change ({exc}); the utility likely violates the Inada conditions"
            ) from exc
    return c


def solve_one_period(u: UtilityFunction, dist: ShockDistribution, w, tol: float = DEFAULT_TOL):
    """Optimal (consumption, saving) of the one-period problem at wealth ``w``.

    Accepts a scalar or an array of wealth levels.
    """
    w_arr = np.asarray(w, dtype=float)
    if np.any(~(w_arr > 0)) and u.domain_low >= 0:
        raise DomainError("initial wealth must be positive")
    c = _solve(u, dist, w_arr, tol, u.domain_low)
    s = w_arr - c
    if c.ndim == 0:
        return float(c), float(s)
    return c, s


def consumption_rule(u: UtilityFunction, dist: ShockDistribution, tol: float = DEFAULT_TOL) -> Callable:
    """Vectorized w -> c(w) for the one-period problem."""
    return lambda w: solve_one_period(u, dist, w, tol)[0]


def _mpc(u, dist, w, c, floor, next_policy):
    xp = _next_wealth(dist, w, c, floor)
    if next_policy is None:
        cp, dcp = xp, 1.0
    else:
        cp, dcp = next_policy(xp), next_policy.derivative(xp)
    a = (-u.upp(cp) * dcp) @ (dist.pi * dist.beta * dist.R**2)
    return a / (-u.upp(c) + a)


def mpc(u: UtilityFunction, dist: ShockDistribution, w, tol: float = DEFAULT_TOL):
    """Marginal propensity to consume from the implicit-function theorem.

    c'(w) = E[beta R^2 (-u''(x'))] / (-u''(c) + E[beta R^2 (-u''(x'))]) with
    x' = R s(w) + Y, evaluated at the solved consumption.
    """
    c, _ = solve_one_period(u, dist, w, tol)
    out = _mpc(u, dist, np.asarray(w, dtype=float), np.asarray(c), u.domain_low, None)
    return float(out) if np.ndim(out) == 0 else out


def find_zero_saving_wealth(u: UtilityFunction, dist: ShockDistribution, tol: float = DEFAULT_TOL) -> float:
    """Wealth w* > 0 at which optimal saving is exactly zero.

    Saving is strictly increasing in wealth; the bracket is grown
    geometrically (down while s > 0, up while s < 0) before bisection.
    """
    saving = lambda w: solve_one_period(u, dist, w, tol)[1]  # noqa: E731
    lo = hi = 1.0
    s_lo = s_hi = saving(1.0)
    for _ in range(200):
        if s_lo <= 0:
            break
        hi, s_hi = lo, s_lo
        lo /= 2.0
        s_lo = saving(lo)
    for _ in range(200):
        if s_hi >= 0:
            break
        lo, s_lo = hi, s_hi
        hi *= 2.0
        s_hi = saving(hi)
    if not (s_lo <= 0 <= s_hi):
        raise SolverError("could not bracket zero saving; the utility likely violates an Inada condition")
    if s_lo == 0:
        return lo
    if s_hi == 0:
        return hi
    return float(brentq(saving, lo, hi, xtol=1e-300, rtol=max(tol, 4 * np.finfo(float).eps)))


@dataclass(frozen=True, eq=False)
class PolicyFunction:
    """Tabulated consumption rule with monotone piecewise-cubic interpolation.

    ``floor`` is the lowest admissible wealth and ``floor_consumption`` the
    consumption chosen there; the pair anchors the interpolant below the
    first grid point. Above the grid the rule is extended linearly with the
    end slope.
    """

    wealth_grid: np.ndarray
    consumption_values: np.ndarray
    floor: float
    floor_consumption: float
    _interp: PchipInterpolator = field(init=False, repr=False)

    def __post_init__(self):
        w = np.array(self.wealth_grid, dtype=float)
        c = np.array(self.consumption_values, dtype=float)
        if w.ndim != 1 or w.shape != c.shape or w.size < 2:
            raise ValueError("wealth grid and consumption values must be 1-d of equal length >= 2")
        if np.any(np.diff(w) <= 0):
            raise ValueError("wealth grid must be strictly increasing")
        if not self.floor < w[0]:
            raise ValueError("floor must lie below the wealth grid")
        if np.any(np.diff(c) <= 0) or not self.floor_consumption < c[0]:
            raise ValueError("consumption must be strictly increasing in wealth")
        w.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "wealth_grid", w)
        object.__setattr__(self, "consumption_values", c)
        object.__setattr__(
            self, "_interp",
            PchipInterpolator(np.r_[self.floor, w], np.r_[self.floor_consumption, c], extrapolate=False),
        )

    @property
    def saving_values(self) -> np.ndarray:
        return self.wealth_grid - self.consumption_values

    def _check(self, w):
        if np.any(w < self.floor):
            bad = w[w < self.floor]
            raise GridError(
                f"wealth {bad.min()!r} below the policy floor {self.floor!r}; extend the grid downward"
            )

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        self._check(w)
        top = self.wealth_grid[-1]
        inside = np.minimum(w, top)
        out = self._interp(inside)
        slope = self._interp(top, 1)
        return np.where(w > top, out + slope * (w - top), out)

    def derivative(self, w):
        w = np.asarray(w, dtype=float)
        self._check(w)
        top = self.wealth_grid[-1]
        return self._interp(np.minimum(w, top), 1)


def tabulate_policy(u: UtilityFunction, dist: ShockDistribution, grid, tol: float = DEFAULT_TOL) -> PolicyFunction:
    """One-period consumption rule tabulated on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    floor = u.domain_low
    if not math.isfinite(floor):
        raise ValueError("tabulated policies need a utility with a finite lower domain bound")
    c = _solve(u, dist, grid, tol, floor)
    # borrowing against income keeps c(floor) strictly above the floor
    c_floor = float(_solve(u, dist, np.array([floor]), tol, floor)[0])
    return PolicyFunction(grid, c, floor, c_floor)


def _identity_policy(grid, floor):
    return PolicyFunction(grid, grid, floor, floor)


def solve_finite_horizon(
    u: UtilityFunction,
    dist: ShockDistribution | Sequence[ShockDistribution],
    horizon: int,
    grid,
    tol: float = DEFAULT_TOL,
) -> list[PolicyFunction]:
    """Backward induction over t = T, ..., 0 on a fixed wealth grid.

    ``dist`` is either one distribution used i.i.d. for every transition or a
    list of ``horizon`` distributions, entry t governing the move t -> t+1.
    Returns the policies indexed by t.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    dists = list(dist) if isinstance(dist, (list, tuple)) else [dist] * horizon
    if len(dists) != horizon:
        raise ValueError(f"expected {horizon} per-period distributions, got {len(dists)}")
    floor = u.domain_low
    if not math.isfinite(floor):
        raise ValueError("finite-horizon solver needs a utility with a finite lower domain bound")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3 or np.any(np.diff(grid) <= 0) or grid[0] <= floor:
        raise ValueError("wealth grid must be increasing, above the utility floor, with >= 3 points")

    policies: list[PolicyFunction] = [_identity_policy(grid, floor)]
    for t in range(horizon - 1, -1, -1):
        nxt = policies[0]
        d = dists[t]
        c = _solve(u, d, grid, tol, floor, nxt)
        c_floor = float(_solve(u, d, np.array([floor]), tol, floor, nxt)[0])
        policies.insert(0, PolicyFunction(grid, c, floor, c_floor))
    return policies


def stage_mpc(u: UtilityFunction, dist: ShockDistribution, policy: PolicyFunction, next_policy: PolicyFunction):
    """Closed-form MPC of a finite-horizon stage on its own grid (1 where the floor binds)."""
    w, c = policy.wealth_grid, policy.consumption_values
    hi = consumption_upper_bound(w, dist, policy.floor)
    out = _mpc(u, dist, w, c, policy.floor, next_policy)
    return np.where(c >= hi, 1.0, out)


def second_differences(grid, values) -> tuple[np.ndarray, bool]:
    """Curvature statistic of tabulated values.

    On a uniform grid this is c[i+1] - 2 c[i] + c[i-1]. On a nonuniform grid
    it is the change in consecutive secant slopes, which is nonpositive
    exactly when the piecewise-linear interpolant is concave.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    steps = np.diff(grid)
    # linspace steps differ by a few ulps, far more than 1e-9 relative on narrow windows
    uniform = bool(np.allclose(steps, steps[0], rtol=UNIFORM_RTOL, atol=0.0))
    if uniform:
        return values[2:] - 2.0 * values[1:-1] + values[:-2], True
    slopes = np.diff(values) / steps
    return np.diff(slopes), False


@dataclass(frozen=True, eq=False)
class ConcavityReport:
    grid: np.ndarray
    values: np.ndarray
    second_differences: np.ndarray
    tolerance: float
    uniform: bool

    @property
    def min_second_difference(self) -> float:
        return float(self.second_differences.min())

    @property
    def max_second_difference(self) -> float:
        return float(self.second_differences.max())

    @property
    def violation_indices(self) -> list[int]:
        """Grid indices (interior points) whose second difference exceeds the tolerance."""
        return [int(i) + 1 for i in np.flatnonzero(self.second_differences > self.tolerance)]

    @property
    def is_concave(self) -> bool:
        return not self.violation_indices


def _evaluate(rule, grid):
    threads = scan_threads()
    if threads <= 1 or grid.size < 2 * threads:
        return np.asarray(rule(grid), dtype=float)
    chunks = np.array_split(grid, threads)
    with ThreadPoolExecutor(threads) as pool:
        parts = list(pool.map(rule, chunks))
    return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def concavity_scan(rule: PolicyFunction | Callable, grid, tol: float = CONCAVITY_TOL) -> ConcavityReport:
    """Tabulate ``rule`` on ``grid`` and flag positive second differences."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3:
        raise ValueError("concavity scan needs at least 3 grid points")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("concavity scan grid must be strictly increasing")
    values = _evaluate(rule, grid)
    d2, uniform = second_differences(grid, values)
    return ConcavityReport(grid, values, d2, tol, uniform)
