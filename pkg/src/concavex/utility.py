"""Marginal-utility algebra for the admissible utility families.

Only derivatives of the period utility are represented. Every formula in
the package is written in terms of u', u'' and u''' (the level u never
enters an Euler equation), so the families below store just enough to
evaluate those three derivatives, the inverse of u', and the absolute risk
tolerance T(x) = -u'(x)/u''(x).

HARA utilities are exactly the ones whose risk tolerance is affine,
T(x) = a*x + b, equivalently u'(x) = scale*(a*x + b)**(-1/a).
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Mapping, NamedTuple

import numpy as np

from concavex._roots import BracketError, decreasing_root

HARA_TOL = 1e-8

__all__ = [
    "HARA_TOL",
    "DomainError",
    "UtilityFunction",
    "CRRA",
    "CARA",
    "HARA",
    "Quadratic",
    "CRRAMixture",
    "Custom",
    "HaraFit",
    "make_utility",
    "inverse_marginal",
    "risk_tolerance",
    "hara_residual",
]


class DomainError(ValueError):
    """An argument lies outside the utility domain or the range of u'."""


class UtilityFunction(ABC):
    """Thrice-differentiable period utility on an open interval.

    Subclasses provide ``up``, ``upp`` and ``uppp`` (first three
    derivatives of u), all elementwise over numpy arrays.
    """

    family: str = ""

    @property
    def domain_low(self) -> float:
        return 0.0

    @property
    def domain_high(self) -> float:
        return math.inf

    @abstractmethod
    def up(self, x): ...

    @abstractmethod
    def upp(self, x): ...

    @abstractmethod
    def uppp(self, x): ...

    def log_up(self, x):
        return np.log(self.up(x))

    def inverse_up(self, m):
        """Solve u'(x) = m for x; numerical fallback used by mixtures and custom."""
        m = np.asarray(m, dtype=float)
        if np.any(~(m > 0)):
            raise DomainError("marginal utility must be positive")
        lo, hi = self.domain_low, self.domain_high
        if math.isfinite(lo) and math.isfinite(hi):
            anchor = 0.5 * (lo + hi)
        elif math.isfinite(lo):
            anchor = lo + max(1.0, abs(lo))
        elif math.isfinite(hi):
            anchor = hi - max(1.0, abs(hi))
        else:
            anchor = 0.0
        log_m = np.log(m)

        def f(x, target):
            return self.log_up(x) - target

        try:
            return decreasing_root(f, lo, hi, anchor, args=(log_m,))
        except BracketError as exc:
            raise DomainError(f"marginal utility outside the range of u': {exc}") from exc

    def check_domain(self, x) -> None:
        x = np.asarray(x, dtype=float)
        if np.any(~((x > self.domain_low) & (x < self.domain_high))):
            raise DomainError(
                f"argument outside the utility domain ({self.domain_low}, {self.domain_high})"
            )

    def to_spec(self) -> dict[str, Any]:
        raise TypeError(f"{type(self).__name__} has no JSON representation")


def _scale_ok(scale: float) -> None:
    if not scale > 0:
        raise ValueError(f"scale must be positive (scale > 0), got {scale}")


def _with_scale(spec: dict[str, Any], scale: float) -> dict[str, Any]:
    if scale != 1.0:
        spec["scale"] = scale
    return spec


@dataclass(frozen=True)
class CRRA(UtilityFunction):
    """u'(x) = scale * x**(-gamma) on (0, inf)."""

    gamma: float
    scale: float = 1.0
    family = "crra"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"CRRA requires gamma > 0, got {self.gamma}")
        _scale_ok(self.scale)

    def up(self, x):
        return self.scale * np.power(x, -self.gamma)

    def upp(self, x):
        return -self.gamma * self.scale * np.power(x, -self.gamma - 1.0)

    def uppp(self, x):
        g = self.gamma
        return g * (g + 1.0) * self.scale * np.power(x, -g - 2.0)

    def log_up(self, x):
        return math.log(self.scale) - self.gamma * np.log(x)

    def inverse_up(self, m):
        return np.power(np.asarray(m, dtype=float) / self.scale, -1.0 / self.gamma)

    def to_spec(self):
        return _with_scale({"family": "crra", "gamma": self.gamma}, self.scale)


@dataclass(frozen=True)
class CARA(UtilityFunction):
    """u'(x) = scale * exp(-alpha x) on the whole real line.

    Evaluated through log u' = log(scale) - alpha x so that large |x| only
    overflows at the final exponentiation.
    """

    alpha: float
    scale: float = 1.0
    family = "cara"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"CARA requires alpha > 0, got {self.alpha}")
        _scale_ok(self.scale)

    @property
    def domain_low(self):
        return -math.inf

    def log_up(self, x):
        return math.log(self.scale) - self.alpha * np.asarray(x, dtype=float)

    def up(self, x):
        return np.exp(self.log_up(x))

    def upp(self, x):
        return -self.alpha * self.up(x)

    def uppp(self, x):
        return self.alpha**2 * self.up(x)

    def inverse_up(self, m):
        return -np.log(np.asarray(m, dtype=float) / self.scale) / self.alpha

    def to_spec(self):
        return _with_scale({"family": "cara", "alpha": self.alpha}, self.scale)


@dataclass(frozen=True)
class HARA(UtilityFunction):
    """u'(x) = scale * (a x + b)**(-1/a), or scale * exp(-x/b) when a = 0.

    The domain is {x : a x + b > 0}: (-b/a, inf) for a > 0, (-inf, -b/a)
    for -1 < a < 0 and the real line for a = 0 (which needs b > 0).
    """

    a: float
    b: float
    scale: float = 1.0
    family = "hara"

    def __post_init__(self):
        if not self.a > -1:
            raise ValueError(f"HARA requires a > -1, got a = {self.a}")
        if self.a == 0 and not self.b > 0:
            raise ValueError(f"HARA with a = 0 requires b > 0, got b = {self.b}")
        _scale_ok(self.scale)

    @property
    def domain_low(self):
        return -self.b / self.a if self.a > 0 else -math.inf

    @property
    def domain_high(self):
        return -self.b / self.a if self.a < 0 else math.inf

    def _base(self, x):
        return self.a * np.asarray(x, dtype=float) + self.b

    def log_up(self, x):
        if self.a == 0:
            return math.log(self.scale) - np.asarray(x, dtype=float) / self.b
        return math.log(self.scale) - np.log(self._base(x)) / self.a

    def up(self, x):
        if self.a == 0:
            return np.exp(self.log_up(x))
        return self.scale * np.power(self._base(x), -1.0 / self.a)

    def upp(self, x):
        if self.a == 0:
            return -self.up(x) / self.b
        return -self.scale * np.power(self._base(x), -1.0 / self.a - 1.0)

    def uppp(self, x):
        if self.a == 0:
            return self.up(x) / self.b**2
        return (1.0 + self.a) * self.scale * np.power(self._base(x), -1.0 / self.a - 2.0)

    def inverse_up(self, m):
        r = np.asarray(m, dtype=float) / self.scale
        if self.a == 0:
            return -self.b * np.log(r)
        return (np.power(r, -self.a) - self.b) / self.a

    def to_spec(self):
        return _with_scale({"family": "hara", "a": self.a, "b": self.b}, self.scale)


@dataclass(frozen=True)
class Quadratic(UtilityFunction):
    """Quadratic utility: u'(x) = scale * (bliss - x) on (-inf, bliss).

    Risk tolerance bliss - x is affine with slope -1 and u''' vanishes, so
    this family sits on the boundary of the class with u''' > 0.
    """

    bliss: float
    scale: float = 1.0
    family = "quadratic"

    def __post_init__(self):
        _scale_ok(self.scale)

    @property
    def domain_low(self):
        return -math.inf

    @property
    def domain_high(self):
        return self.bliss

    def up(self, x):
        return self.scale * (self.bliss - np.asarray(x, dtype=float))

    def upp(self, x):
        return np.full(np.shape(x), -self.scale)

    def uppp(self, x):
        return np.zeros(np.shape(x))

    def inverse_up(self, m):
        return self.bliss - np.asarray(m, dtype=float) / self.scale

    def to_spec(self):
        return _with_scale({"family": "quadratic", "bliss": self.bliss}, self.scale)


@dataclass(frozen=True)
class CRRAMixture(UtilityFunction):
    """u'(x) = sum_i weights[i] * x**(-exponents[i]) on (0, inf).

    With two or more distinct exponents the risk tolerance is not affine,
    so the mixture is the canonical admissible non-HARA utility.
    """

    weights: tuple[float, ...]
    exponents: tuple[float, ...]
    family = "mixture"

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        e = tuple(float(v) for v in self.exponents)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "exponents", e)
        if len(w) == 0 or len(w) != len(e):
            raise ValueError("mixture needs equally many weights and exponents (at least one)")
        if any(not v > 0 for v in w):
            raise ValueError(f"mixture weights must be positive, got {w}")
        if any(not v > 0 for v in e):
            raise ValueError(f"mixture exponents must be positive, got {e}")
        if len(set(e)) != len(e):
            raise ValueError(f"mixture exponents must be distinct, got {e}")

    def _terms(self, x, power_shift, coef):
        x = np.asarray(x, dtype=float)
        e = np.asarray(self.exponents)
        return np.power(x[..., None], -e - power_shift) @ (np.asarray(self.weights) * coef)

    def up(self, x):
        return self._terms(x, 0.0, 1.0)

    def upp(self, x):
        e = np.asarray(self.exponents)
        return self._terms(x, 1.0, -e)

    def uppp(self, x):
        e = np.asarray(self.exponents)
        return self._terms(x, 2.0, e * (e + 1.0))

    def log_up(self, x):
        # log-sum-exp keeps the search well scaled near 0 and at large x
        x = np.asarray(x, dtype=float)
        terms = np.log(np.asarray(self.weights)) - np.asarray(self.exponents) * np.log(x)[..., None]
        top = terms.max(axis=-1)
        return top + np.log(np.exp(terms - top[..., None]).sum(axis=-1))

    def to_spec(self):
        return {"family": "mixture", "weights": list(self.weights), "exponents": list(self.exponents)}


@dataclass(frozen=True)
class Custom(UtilityFunction):
    """User-supplied derivatives u', u'', u''' (all three are required).

    The callbacks must accept and return numpy arrays elementwise.
    """

    up_fn: Callable
    upp_fn: Callable
    uppp_fn: Callable
    low: float = 0.0
    high: float = math.inf
    family = "custom"

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"custom domain must satisfy low < high, got ({self.low}, {self.high})")

    @property
    def domain_low(self):
        return self.low

    @property
    def domain_high(self):
        return self.high

    def up(self, x):
        return np.asarray(self.up_fn(np.asarray(x, dtype=float)), dtype=float)

    def upp(self, x):
        return np.asarray(self.upp_fn(np.asarray(x, dtype=float)), dtype=float)

    def uppp(self, x):
        return np.asarray(self.uppp_fn(np.asarray(x, dtype=float)), dtype=float)


_FAMILIES = {
    "crra": (CRRA, ("gamma",)),
    "cara": (CARA, ("alpha",)),
    "hara": (HARA, ("a", "b")),
    "quadratic": (Quadratic, ("bliss",)),
    "mixture": (CRRAMixture, ("weights", "exponents")),
}


def make_utility(spec: UtilityFunction | Mapping[str, Any]) -> UtilityFunction:
    """Build a utility from a JSON-style family descriptor.

    >>> make_utility({"family": "crra", "gamma": 2.0}).up(3.0)
    0.1111111111111111
    """
    if isinstance(spec, UtilityFunction):
        return spec
    family = spec.get("family")
    if family not in _FAMILIES:
        raise ValueError(f"unknown utility family {family!r}; expected one of {sorted(_FAMILIES)}")
    cls, required = _FAMILIES[family]
    missing = [k for k in required if k not in spec]
    if missing:
        raise ValueError(f"{family} utility is missing {missing}")
    kwargs = {k: spec[k] for k in required}
    if family == "mixture":
        kwargs = {k: tuple(v) for k, v in kwargs.items()}
    else:
        kwargs = {k: float(v) for k, v in kwargs.items()}
    if "scale" in spec:
        if family == "mixture":
            raise ValueError("mixture utilities carry their scale in the weights")
        kwargs["scale"] = float(spec["scale"])
    return cls(**kwargs)


def inverse_marginal(u: UtilityFunction, m):
    """Return x with u'(x) = m. Scalars in, scalars out."""
    x = u.inverse_up(m)
    return float(x) if np.ndim(x) == 0 else x


def risk_tolerance(u: UtilityFunction, x):
    """Absolute risk tolerance -u'(x)/u''(x)."""
    u.check_domain(x)
    t = -u.up(x) / u.upp(x)
    return float(t) if np.ndim(t) == 0 else t


class HaraFit(NamedTuple):
    residual: float
    a: float
    b: float

    def is_hara(self, tol: float = HARA_TOL) -> bool:
        return self.residual <= tol


def hara_residual(u: UtilityFunction, grid) -> HaraFit:
    """Least-squares affine fit of the risk tolerance over ``grid``.

    The residual is the largest absolute deviation of T from the fitted
    line; it vanishes (to rounding) exactly when u is HARA on the grid.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3:
        raise ValueError("hara_residual needs a one-dimensional grid with at least 3 points")
    t = np.asarray(risk_tolerance(u, grid))
    design = np.column_stack([grid, np.ones_like(grid)])
    (a, b), *_ = np.linalg.lstsq(design, t, rcond=None)
    resid = float(np.max(np.abs(t - (a * grid + b))))
    return HaraFit(resid, float(a), float(b))
