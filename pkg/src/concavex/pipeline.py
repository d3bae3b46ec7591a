"""From a non-HARA utility to a certified non-concave consumption function.

The construction runs entirely in the one-period problem:

1. search marginal-utility levels for a pair with Phi(y1)/y1 > Phi(y2)/y2
   (none exists for HARA utilities, which get a verdict instead);
2. turn the pair into two-point (p, x, v) weights with g''(0) > 0 and map
   them to a shock law (pi, beta, R, Y) with uniform probabilities;
3. locate the wealth w* where optimal saving is zero, so s(w*) = 0 is
   exactly where g is convex;
4. tabulate c(w) on a uniform window around w* and keep the largest
   positive second difference as the certificate.

Because c = g(s) and c + s = w, c''(w) = g''(s) / (1 + g'(s))**3, so the
sign of c'' at w* is the sign of g'' at zero.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from concavex.euler import (
    DEFAULT_TOL,
    consumption_upper_bound,
    find_zero_saving_wealth,
    second_differences,
    solve_one_period,
)
from concavex.hlp import (
    RATIO_MARGIN,
    GContext,
    build_counterexample,
    default_ratio_grid,
    find_phi_ratio_violation,
    g_second_derivative_sign,
    lb3_check,
    phi_ratios,
)
from concavex.shocks import HLPParameters, ShockDistribution, hlp_to_shocks, shocks_to_hlp
from concavex.utility import UtilityFunction, hara_residual, make_utility

logger = logging.getLogger(__name__)

# Inada surrogates: probes at distance 1e-100 from the lower end and at 1e100.
# Closer probes (1e-6, 1e6) reject CRRA utilities with gamma <= 2/3; these
# accept any power tail with exponent above 0.04.
INADA_PROBES = (1e-100, 1e100)
INADA_BOUNDS = (1e4, 1e-4)


class PreconditionError(ValueError):
    """The utility is outside the class covered by the construction."""


class CertificationError(RuntimeError):
    """A counterexample was constructed but its non-concavity is not certifiable."""


@dataclass(frozen=True)
class PipelineConfig:
    tol: float = DEFAULT_TOL
    window_ratio: float = 1.2
    scan_points: int = 101
    k: float = -1.0
    ratio_margin: float = RATIO_MARGIN
    noise_multiple: float = 10.0
    shifted_domain: bool = False
    ratio_grid: tuple[float, ...] | None = None


@dataclass(frozen=True)
class HARAVerdict:
    """No Phi-ratio violation: the utility behaves as HARA with T(x) = a x + b."""

    a: float
    b: float
    residual: float
    ratio_spread: float

    def to_dict(self) -> dict[str, Any]:
        return {"verdict": "hara", "a": self.a, "b": self.b, "residual": self.residual,
                "ratio_spread": self.ratio_spread}


@dataclass(frozen=True, eq=False)
class CounterexampleCertificate:
    utility: dict[str, Any]
    shocks: ShockDistribution
    w_star: float
    window: tuple[float, float]
    scan_w: np.ndarray
    scan_c: np.ndarray
    second_differences: np.ndarray
    margin: float
    max_positive_second_difference: float
    tolerances: dict[str, float]
    g_sign_check: dict[str, Any]
    hlp: HLPParameters | None = field(default=None)

    def to_dict(self) -> dict[str, Any]:
        d2 = [None, *(float(v) for v in self.second_differences), None]
        scan = [{"w": float(w), "c": float(c), "second_difference": s}
                for w, c, s in zip(self.scan_w, self.scan_c, d2)]
        return {
            "utility": self.utility,
            "shocks": self.shocks.to_spec(),
            "w_star": self.w_star,
            "window": list(self.window),
            "scan": scan,
            "margin": self.margin,
            "max_positive_second_difference": self.max_positive_second_difference,
            "tolerances": dict(self.tolerances),
            "g_sign_check": dict(self.g_sign_check),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CounterexampleCertificate":
        scan = d["scan"]
        d2 = np.array([row["second_difference"] for row in scan[1:-1]], dtype=float)
        return cls(
            utility=d["utility"],
            shocks=ShockDistribution.from_spec(d["shocks"]),
            w_star=float(d["w_star"]),
            window=tuple(d["window"]),
            scan_w=np.array([row["w"] for row in scan], dtype=float),
            scan_c=np.array([row["c"] for row in scan], dtype=float),
            second_differences=d2,
            margin=float(d["margin"]),
            max_positive_second_difference=float(d["max_positive_second_difference"]),
            tolerances={k: float(v) for k, v in d["tolerances"].items()},
            g_sign_check=d["g_sign_check"],
        )

    @classmethod
    def from_json(cls, text: str) -> "CounterexampleCertificate":
        return cls.from_dict(json.loads(text))


def _probe_points(u: UtilityFunction) -> np.ndarray:
    lo, hi = u.domain_low, u.domain_high
    if math.isfinite(lo) and math.isfinite(hi):
        return lo + (hi - lo) * np.linspace(0.01, 0.99, 41)
    if math.isfinite(lo):
        return lo + np.geomspace(1e-3, 1e3, 61)
    if math.isfinite(hi):
        return hi - np.geomspace(1e-3, 1e3, 61)
    return np.linspace(-50.0, 50.0, 61)


def admissibility_violations(u: UtilityFunction, shifted_domain: bool = False) -> list[str]:
    """Sampled check of u' > 0, u'' < 0, u''' > 0 and both Inada limits.

    Without ``shifted_domain`` the domain must be (0, inf). With it, the
    limits are taken at the ends of the utility's own domain.
    """
    problems = []
    if not shifted_domain and (u.domain_low != 0.0 or math.isfinite(u.domain_high)):
        problems.append(
            f"domain ({u.domain_low}, {u.domain_high}) is not (0, inf); enable shifted_domain for HARA forms"
        )
    x = _probe_points(u)
    with np.errstate(all="ignore"):
        d1, d2, d3 = u.up(x), u.upp(x), u.uppp(x)
    if not np.all(d1 > 0):
        problems.append("u' is not positive on the sampled domain")
    if not np.all(d2 < 0):
        problems.append("u'' is not negative on the sampled domain")
    if not np.all(d3 > 0):
        problems.append("u''' is not positive on the sampled domain")
    near, far = INADA_PROBES
    lo, hi = u.domain_low, u.domain_high
    x_low = lo + near if math.isfinite(lo) else -far
    x_high = hi - near if math.isfinite(hi) else far
    with np.errstate(all="ignore"):
        m_low, m_high = float(u.up(x_low)), float(u.up(x_high))
    if not m_low > INADA_BOUNDS[0]:
        problems.append(f"u'({x_low}) = {m_low} does not exceed {INADA_BOUNDS[0]} (Inada at the lower end)")
    if not m_high < INADA_BOUNDS[1]:
        problems.append(f"u'({x_high}) = {m_high} is not below {INADA_BOUNDS[1]} (Inada at the upper end)")
    return problems


def _noise_floor(dist: ShockDistribution, w, tol: float, floor: float) -> float:
    return tol * max(1.0, float(np.max(np.abs(consumption_upper_bound(w, dist, floor)))))


def run_pipeline(u: UtilityFunction, config: PipelineConfig | None = None):
    """Return a :class:`CounterexampleCertificate` or a :class:`HARAVerdict`."""
    config = config or PipelineConfig()
    problems = admissibility_violations(u, config.shifted_domain)
    if problems:
        raise PreconditionError("; ".join(problems))

    y_grid = default_ratio_grid(u) if config.ratio_grid is None else np.asarray(config.ratio_grid)
    found = find_phi_ratio_violation(u, y_grid, config.ratio_margin)
    if found is None:
        fit = hara_residual(u, np.sort(np.asarray(u.inverse_up(y_grid))))
        ratios = phi_ratios(u, y_grid)
        return HARAVerdict(fit.a, fit.b, fit.residual, float(ratios.max() - ratios.min()))

    params = build_counterexample(u, found.y1, found.y2, config.k)
    dist = hlp_to_shocks(params)
    gap = lb3_check(u, params.p, [found.y1, found.y2]).gap
    sign = g_second_derivative_sign(GContext(u, params), 0.0)
    if sign.sign != 1:
        raise CertificationError(f"constructed weights do not make g convex at zero: {sign}")

    w_star = find_zero_saving_wealth(u, dist, config.tol)
    window = (w_star / config.window_ratio, w_star * config.window_ratio)
    grid = np.linspace(*window, config.scan_points)
    c, _ = solve_one_period(u, dist, grid, config.tol)
    d2, uniform = second_differences(grid, c)
    if not uniform:
        raise CertificationError("scan window is too narrow to be resolved as a uniform grid")
    margin = config.noise_multiple * _noise_floor(dist, grid, config.tol, u.domain_low)
    best = float(d2.max())
    if not best > margin:
        raise CertificationError(
            f"largest second difference {best!r} does not exceed the certification margin {margin!r} "
            f"(w* = {w_star!r}, g sign expression {sign.expression!r})"
        )
    centre = int(np.argmin(np.abs(grid - w_star)))
    near = [i for i in (centre - 1, centre, centre + 1) if 1 <= i <= grid.size - 2]
    if not any(d2[i - 1] > margin for i in near):
        raise CertificationError(f"no certified convexity next to w* = {w_star!r}")

    logger.info("certified: w* = %.6g, max second difference %.3e, margin %.3e", w_star, best, margin)
    return CounterexampleCertificate(
        utility=u.to_spec(),
        shocks=dist,
        w_star=w_star,
        window=window,
        scan_w=grid,
        scan_c=c,
        second_differences=d2,
        margin=margin,
        max_positive_second_difference=best,
        tolerances={"solver": config.tol, "noise_multiple": config.noise_multiple},
        g_sign_check={
            "s": 0.0,
            "sign": "+",
            "expression": sign.expression,
            "normalized": sign.normalized,
            "y1": found.y1,
            "y2": found.y2,
            "ratio_gap": found.ratio_gap,
            "lb3_gap": gap,
        },
        hlp=params,
    )


def certificate_diagnostics(cert: CounterexampleCertificate, strict_tol: float | None = None) -> list[str]:
    """Re-derive a certificate from scratch; an empty list means it verifies.

    Consumption is re-solved at ``strict_tol`` (default 100 times tighter
    than the certificate's solver tolerance) and the largest second
    difference must stay above half the recorded margin.
    """
    solver_tol = cert.tolerances["solver"]
    strict_tol = solver_tol / 100.0 if strict_tol is None else strict_tol
    out = []
    u = make_utility(cert.utility)
    dist = cert.shocks
    w = cert.scan_w

    strict_floor = _noise_floor(dist, w, strict_tol, u.domain_low)
    if not cert.margin > strict_floor:
        out.append(f"margin {cert.margin!r} does not exceed the strict noise floor {strict_floor!r} "
                   f"at tolerance {strict_tol!r}")
        return out

    stored_d2, uniform = second_differences(w, cert.scan_c)
    if not uniform:
        out.append("scan grid is not uniform; the margin applies to plain second differences only")
    if not np.allclose(stored_d2, cert.second_differences, rtol=1e-9, atol=1e-3 * cert.margin):
        out.append("stored second differences are inconsistent with stored consumption")

    c_new, _ = solve_one_period(u, dist, w, strict_tol)
    drift = float(np.max(np.abs(c_new - cert.scan_c)))
    allowed = 10.0 * _noise_floor(dist, w, solver_tol, u.domain_low)
    if drift > allowed:
        out.append(f"stored consumption differs from a fresh solve by {drift!r} (allowed {allowed!r})")

    d2_new, _ = second_differences(w, c_new)
    if not d2_new.max() > cert.margin / 2:
        out.append(f"re-solved max second difference {d2_new.max()!r} is not above half the margin")

    _, s_star = solve_one_period(u, dist, cert.w_star, strict_tol)
    if abs(s_star) > 100.0 * solver_tol * max(1.0, cert.w_star):
        out.append(f"saving at w* is {s_star!r}, not zero")

    sign = g_second_derivative_sign(GContext(u, shocks_to_hlp(dist)), 0.0)
    if sign.sign != 1:
        out.append(f"g is not convex at zero saving for the recorded shocks ({sign})")
    return out


def verify_certificate(cert: CounterexampleCertificate, strict_tol: float | None = None) -> bool:
    problems = certificate_diagnostics(cert, strict_tol)
    for p in problems:
        logger.warning("certificate check failed: %s", p)
    return not problems
