"""Vectorized bracketing for monotone decreasing scalar functions.

Every root problem in the package (inverse marginal utility, Euler
equations) is a strictly decreasing function of one variable on an open
interval whose ends may be infinite. ``decreasing_root`` pushes bracket
endpoints toward the interval ends until the sign changes and then hands
the bracket to scipy's elementwise Chandrupatla solver.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize.elementwise import find_root

# Relative inset from a finite boundary where the first probe is placed.
BOUNDARY_INSET = 1e-12
_MAX_PUSH = 40


class BracketError(ValueError):
    """No sign change could be found inside the admissible interval."""


def _push(f, args, bound, anchor, other, side, want_positive):
    """Move probes toward ``bound`` until ``f`` has the wanted sign.

    ``side`` is -1 for the left end and +1 for the right end.
    """
    bound = np.asarray(bound, dtype=float)
    finite = np.isfinite(bound)
    span = np.where(np.isfinite(other), np.abs(other - bound), np.nan)
    scale = np.maximum(1.0, np.abs(anchor))
    x = np.empty_like(anchor)
    ok = np.zeros(anchor.shape, dtype=bool)
    inset = BOUNDARY_INSET
    for k in range(_MAX_PUSH):
        todo = ~ok
        if not todo.any():
            break
        fin_step = np.where(np.isfinite(span), span, scale) * inset
        cand = np.where(finite, bound - side * fin_step, anchor + side * scale * 2.0**k)
        cand = np.where(todo, cand, x)
        with np.errstate(all="ignore"):
            val = f(cand, *args)
        good = np.isfinite(val) & (val > 0 if want_positive else val < 0)
        good &= cand != bound
        x = np.where(todo, cand, x)
        ok |= todo & good
        inset = max(inset * 1e-3, 1e-300)
    return x, ok


def decreasing_root(f, lo, hi, anchor, args=(), xrtol=4 * np.finfo(float).eps):
    """Root of a strictly decreasing elementwise ``f`` on the open interval (lo, hi).

    Parameters
    ----------
    f : callable
        ``f(x, *args)`` evaluated elementwise on broadcast arrays.
    lo, hi : array_like
        Interval ends, possibly infinite. Probes never touch them.
    anchor : array_like
        A point inside the interval used to seed expansion toward infinite ends.
    xrtol : float
        Relative tolerance on the root passed to the bracketing solver.

    Returns
    -------
    numpy.ndarray
        Roots with the broadcast shape of the inputs.

    Raises
    ------
    BracketError
        If some element shows no sign change after maximal refinement.
    """
    args = tuple(np.asarray(a, dtype=float) for a in args)
    shape = np.broadcast_shapes(np.shape(lo), np.shape(hi), np.shape(anchor),
                                *(a.shape for a in args))
    lo = np.broadcast_to(np.asarray(lo, dtype=float), shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), shape)
    anchor = np.broadcast_to(np.asarray(anchor, dtype=float), shape).copy()
    args = tuple(np.broadcast_to(a, shape) for a in args)

    left, ok_l = _push(f, args, lo, anchor, hi, -1, True)
    right, ok_r = _push(f, args, hi, anchor, lo, +1, False)
    bad = ~(ok_l & ok_r)
    if bad.any():
        idx = np.argwhere(bad)[0]
        raise BracketError(
            f"no sign change found inside ({lo[tuple(idx)]}, {hi[tuple(idx)]}) "
            f"at element {tuple(int(i) for i in idx)}"
        )
    res = find_root(f, (left, right), args=args, tolerances={"xrtol": xrtol})
    return np.asarray(res.x, dtype=float)
