"""Concavity of g(s) = phi^{-1}(sum_n p_n phi(x_n + v_n s)) with phi = u'.

With (p, x, v) = (pi beta R, Y, R) this g maps saving to the consumption
that justifies it, and the consumption function is concave exactly when g
is. Differentiating phi(g(s)) = sum_n p_n phi(x_n + v_n s) twice and
eliminating g' gives

    phi'(g)^3 g'' = phi'(g)^2 sum p v^2 phi''(x + v s) - phi''(g) (sum p v phi'(x + v s))^2,

so with phi' < 0 the sign of g'' is minus the sign of the right-hand side.
At s = 0 and for the Cauchy-Schwarz extremal slopes v_n = k phi'_n / phi''_n
(k < 0) that right-hand side has the sign of

    Phi(sum p y) - sum p Phi(y),   Phi(y) = phi'(phi^{-1}(y))^2 / phi''(phi^{-1}(y)),

with y_n = phi(x_n). Phi(y)/y is constant, equal to 1/(a+1), precisely for
HARA utilities, and any pair y1, y2 with Phi(y1)/y1 > Phi(y2)/y2 yields a
convex g via p = (y2 / (2 y1), 1/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from concavex.shocks import HLPParameters
from concavex.utility import DomainError, UtilityFunction

SIGN_RTOL = 1e-12
LB3_RTOL = 1e-10
RATIO_MARGIN = 1e-6
RATIO_WINDOW = (0.05, 20.0)
RATIO_POINTS = 64


@dataclass(frozen=True)
class GContext:
    utility: UtilityFunction
    params: HLPParameters

    def __post_init__(self):
        x = self.params.x
        u = self.utility
        if np.any(~((x > u.domain_low) & (x < u.domain_high))):
            raise DomainError("every x_n must lie inside the utility domain")

    @property
    def s_domain(self) -> tuple[float, float]:
        """Open interval of s keeping every x_n + v_n s inside the domain."""
        p = self.params
        lo = float(np.max((self.utility.domain_low - p.x) / p.v))
        hi = float(np.min((self.utility.domain_high - p.x) / p.v))
        return lo, hi

    def _args(self, s):
        s = np.asarray(s, dtype=float)
        lo, hi = self.s_domain
        if np.any(~((s > lo) & (s < hi))):
            raise DomainError(f"s outside its domain ({lo}, {hi})")
        return self.params.x + self.params.v * s[..., None]


def g_eval(ctx: GContext, s):
    """g(s) = phi^{-1}(sum_n p_n phi(x_n + v_n s))."""
    z = ctx._args(s)
    out = ctx.utility.inverse_up(ctx.utility.up(z) @ ctx.params.p)
    return float(out) if np.ndim(out) == 0 else out


class GSign(NamedTuple):
    sign: int
    expression: float
    normalized: float


def _g_terms(ctx: GContext, s):
    u, p = ctx.utility, ctx.params
    z = ctx._args(s)
    g = u.inverse_up(u.up(z) @ p.p)
    first = u.upp(g) ** 2 * ((u.uppp(z) * p.v**2) @ p.p)
    second = u.uppp(g) * ((u.upp(z) * p.v) @ p.p) ** 2
    return g, first, second


def g_second_derivative_sign(ctx: GContext, s: float = 0.0) -> GSign:
    """Sign of g''(s) from the closed-form elimination identity.

    ``expression`` is phi'(g)^2 sum p v^2 phi'' - phi''(g) (sum p v phi')^2,
    nonnegative exactly when g''(s) <= 0. ``normalized`` divides it by the
    sum of the magnitudes of its two terms; values within SIGN_RTOL of zero
    are reported as sign 0.
    """
    _, first, second = _g_terms(ctx, s)
    expr = float(first - second)
    scale = abs(float(first)) + abs(float(second))
    normalized = expr / scale if scale > 0 else 0.0
    if abs(normalized) <= SIGN_RTOL:
        sign = 0
    else:
        sign = -1 if expr > 0 else 1
    return GSign(sign, expr, normalized)


def g_second_derivative(ctx: GContext, s: float = 0.0) -> float:
    """g''(s) itself: the elimination expression divided by phi'(g)^3."""
    g, first, second = _g_terms(ctx, s)
    return float((first - second) / ctx.utility.upp(g) ** 3)


def phi_capital(u: UtilityFunction, y):
    """Phi(y) = u''(x)^2 / u'''(x) at x = (u')^{-1}(y)."""
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise DomainError("Phi is defined for positive marginal utility only")
    x = u.inverse_up(y)
    d3 = u.uppp(x)
    if np.any(~(d3 > 0)):
        raise DomainError("Phi requires u''' > 0 on the domain")
    out = u.upp(x) ** 2 / d3
    return float(out) if out.ndim == 0 else out


class LB3Result(NamedTuple):
    holds: bool
    gap: float


def lb3_check(u: UtilityFunction, p, y, rtol: float = LB3_RTOL) -> LB3Result:
    """Test Phi(sum p y) >= sum p Phi(y) for positive weights (not necessarily summing to one)."""
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    if p.shape != y.shape or np.any(p <= 0):
        raise ValueError("p must be positive and match y in length")
    left = phi_capital(u, float(p @ y))
    right = float(p @ np.asarray(phi_capital(u, y)))
    gap = left - right
    return LB3Result(gap >= -rtol * (abs(left) + abs(right)), gap)


def default_ratio_grid(u: UtilityFunction, points: int = RATIO_POINTS, window=RATIO_WINDOW) -> np.ndarray:
    """Log-spaced marginal-utility values covering u' over an x window.

    The window is measured from the nearest finite domain end, so shifted
    HARA domains are covered the same way as (0, inf).
    """
    x_lo, x_hi = window
    if math.isfinite(u.domain_low):
        xs = (u.domain_low + x_lo, u.domain_low + x_hi)
    elif math.isfinite(u.domain_high):
        xs = (u.domain_high - x_hi, u.domain_high - x_lo)
    else:
        xs = (x_lo, x_hi)
    ys = u.up(np.asarray(xs))
    return np.geomspace(ys.min(), ys.max(), points)


class RatioViolation(NamedTuple):
    y1: float
    y2: float
    ratio_gap: float


def phi_ratios(u: UtilityFunction, y_grid) -> np.ndarray:
    y_grid = np.asarray(y_grid, dtype=float)
    return np.asarray(phi_capital(u, y_grid)) / y_grid


def find_phi_ratio_violation(u: UtilityFunction, y_grid=None, margin: float = RATIO_MARGIN) -> RatioViolation | None:
    """Extreme pair of Phi(y)/y over the grid, oriented so ratio(y1) > ratio(y2).

    Returns None when the spread is within ``margin`` (HARA-consistent).
    """
    y_grid = default_ratio_grid(u) if y_grid is None else np.asarray(y_grid, dtype=float)
    if y_grid.size < 2:
        raise ValueError("ratio search needs at least two points")
    r = phi_ratios(u, y_grid)
    i, j = int(np.argmax(r)), int(np.argmin(r))
    gap = float(r[i] - r[j])
    if gap <= margin:
        return None
    return RatioViolation(float(y_grid[i]), float(y_grid[j]), gap)


def build_counterexample(u: UtilityFunction, y1: float, y2: float, k: float = -1.0) -> HLPParameters:
    """Two-point (p, x, v) whose g is strictly convex at s = 0.

    x_n = (u')^{-1}(y_n), p = (y2 / (2 y1), 1/2) and v_n = k u''(x_n) / u'''(x_n),
    which attains equality in Cauchy-Schwarz and is positive for k < 0.
    """
    if not k < 0:
        raise ValueError(f"k must be negative, got {k}")
    r1, r2 = phi_ratios(u, [y1, y2])
    # ties up to rounding are the HARA case, not a violation
    if not r1 - r2 > LB3_RTOL * max(abs(r1), abs(r2)):
        raise ValueError(
            f"need Phi(y1)/y1 > Phi(y2)/y2, got {r1!r} <= {r2!r}; swap the pair or the utility is HARA"
        )
    x = np.asarray(u.inverse_up(np.array([y1, y2])))
    v = k * u.upp(x) / u.uppp(x)
    return HLPParameters(np.array([y2 / (2.0 * y1), 0.5]), x, v)


def cauchy_schwarz_sides(u: UtilityFunction, params: HLPParameters) -> tuple[float, float]:
    """(sum p v phi')^2 and (sum p v^2 phi'')(sum p phi'^2 / phi'') at s = 0."""
    p, x, v = params.p, params.x, params.v
    d1, d2 = u.upp(x), u.uppp(x)
    lhs = float((p * v * d1).sum() ** 2)
    rhs = float((p * v**2 * d2).sum() * (p * d1**2 / d2).sum())
    return lhs, rhs
