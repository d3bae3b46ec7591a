"""Finite-support shock laws for (beta, R, Y) and their (p, x, v) image.

A shock distribution with states (pi_n, beta_n, R_n, Y_n) enters the
one-period Euler equation only through

    p_n = pi_n * beta_n * R_n,   x_n = Y_n,   v_n = R_n,

so that E[beta R u'(R s + Y)] = sum_n p_n u'(x_n + v_n s). The inverse map
is many-to-one; the probabilities are a free choice.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

PROB_TOL = 1e-12


def _frozen(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ShockDistribution:
    """Joint law of (beta, R, Y) on finitely many states."""

    pi: np.ndarray
    beta: np.ndarray
    R: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        arrays = {k: _frozen(getattr(self, k), k) for k in ("pi", "beta", "R", "Y")}
        n = {a.size for a in arrays.values()}
        if len(n) != 1 or 0 in n:
            raise ValueError("pi, beta, R and Y must be nonempty and of equal length")
        for name, arr in arrays.items():
            if np.any(arr <= 0):
                raise ValueError(f"all {name} must be strictly positive, got {arr.tolist()}")
        total = arrays["pi"].sum()
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities must sum to 1 within {PROB_TOL}, got {total!r}")
        pi = arrays["pi"] / total
        pi.setflags(write=False)
        arrays["pi"] = pi
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)

    @property
    def n_states(self) -> int:
        return self.pi.size

    def __eq__(self, other):
        if not isinstance(other, ShockDistribution):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("pi", "beta", "R", "Y"))

    @classmethod
    def deterministic(cls, beta: float, R: float, Y: float) -> "ShockDistribution":
        return cls([1.0], [beta], [R], [Y])

    @classmethod
    def from_states(cls, states: Sequence[Mapping[str, float]]) -> "ShockDistribution":
        return cls(
            [s["pi"] for s in states],
            [s["beta"] for s in states],
            [s["R"] for s in states],
            [s["Y"] for s in states],
        )

    @classmethod
    def from_spec(cls, spec: Mapping[str, Any]) -> "ShockDistribution":
        return cls.from_states(spec["states"])

    def to_spec(self) -> dict[str, Any]:
        return {
            "states": [
                {"pi": float(p), "beta": float(b), "R": float(r), "Y": float(y)}
                for p, b, r, y in zip(self.pi, self.beta, self.R, self.Y)
            ]
        }

    @classmethod
    def random(cls, rng: np.random.Generator, n_states: int, beta=(0.5, 1.2), R=(0.5, 3.0),
               Y=(0.1, 5.0)) -> "ShockDistribution":
        """Draw a distribution with uniform parameters and Dirichlet probabilities."""
        pi = rng.dirichlet(np.ones(n_states))
        pi = np.maximum(pi, 1e-6)
        pi = pi / pi.sum()
        return cls(
            pi,
            rng.uniform(*beta, size=n_states),
            rng.uniform(*R, size=n_states),
            rng.uniform(*Y, size=n_states),
        )


@dataclass(frozen=True, eq=False)
class HLPParameters:
    """Weights p, locations x and slopes v of sum_n p_n phi(x_n + v_n s)."""

    p: np.ndarray
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        arrays = {k: _frozen(getattr(self, k), k) for k in ("p", "x", "v")}
        if len({a.size for a in arrays.values()}) != 1 or arrays["p"].size == 0:
            raise ValueError("p, x and v must be nonempty and of equal length")
        if np.any(arrays["p"] <= 0) or np.any(arrays["v"] <= 0):
            raise ValueError("p and v must be strictly positive")
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)

    def __eq__(self, other):
        if not isinstance(other, HLPParameters):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("p", "x", "v"))

    @classmethod
    def from_spec(cls, spec: Mapping[str, Any]) -> "HLPParameters":
        return cls(spec["p"], spec["x"], spec["v"])

    def to_spec(self) -> dict[str, Any]:
        return {"p": self.p.tolist(), "x": self.x.tolist(), "v": self.v.tolist()}


def shocks_to_hlp(dist: ShockDistribution) -> HLPParameters:
    return HLPParameters(dist.pi * dist.beta * dist.R, dist.Y, dist.R)


def hlp_to_shocks(params: HLPParameters, pi=None) -> ShockDistribution:
    """Invert :func:`shocks_to_hlp` for a chosen probability vector.

    ``pi`` defaults to uniform. The resulting discount factors may exceed
    one; positivity is the only requirement on beta.
    """
    n = params.p.size
    pi = np.full(n, 1.0 / n) if pi is None else np.asarray(pi, dtype=float)
    if pi.shape != (n,):
        raise ValueError(f"pi must have length {n}")
    if np.any(params.x <= 0):
        raise ValueError("income x_n must be strictly positive to form a shock distribution")
    return ShockDistribution(pi, params.p / (pi * params.v), params.v, params.x)
