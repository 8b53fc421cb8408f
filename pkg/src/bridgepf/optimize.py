"""Nelder-Mead simplex minimisation.

A compact implementation of the classic downhill simplex with the
standard reflection/expansion/contraction/shrink moves. It is all that
the guide-fitting routines need, keeps the fitting deterministic, and
returns best-so-far with a flag instead of raising when the iteration
budget runs out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_REFLECT = 1.0
_EXPAND = 2.0
_CONTRACT = 0.5
_SHRINK = 0.5


@dataclass
class NelderMeadResult:
    x: np.ndarray
    fun: float
    n_eval: int
    converged: bool


def nelder_mead(objective, x0, xtol=1e-8, ftol=1e-8, max_eval=2000,
                initial_step=0.1) -> NelderMeadResult:
    """Minimise objective from x0; stops on simplex diameter or value spread.

    initial_step sets the size of the starting simplex, either a scalar
    applied to every coordinate or one offset per coordinate.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    f0 = float(objective(x0))
    if not np.isfinite(f0):
        raise ValueError("objective must be finite at the starting point")

    steps = np.broadcast_to(np.asarray(initial_step, dtype=float), (n,))
    simplex = np.tile(x0, (n + 1, 1))
    for i in range(n):
        simplex[i + 1, i] += steps[i] if steps[i] != 0 else 1e-4
    values = np.array([f0] + [float(objective(v)) for v in simplex[1:]])
    n_eval = n + 1

    while n_eval < max_eval:
        order = np.argsort(values)
        simplex, values = simplex[order], values[order]
        diameter = np.max(np.abs(simplex[1:] - simplex[0]))
        spread = values[-1] - values[0]
        if diameter < xtol or spread < ftol:
            return NelderMeadResult(simplex[0].copy(), values[0], n_eval, True)

        centroid = simplex[:-1].mean(axis=0)
        xr = centroid + _REFLECT * (centroid - simplex[-1])
        fr = float(objective(xr)); n_eval += 1
        if fr < values[0]:
            xe = centroid + _EXPAND * (centroid - simplex[-1])
            fe = float(objective(xe)); n_eval += 1
            simplex[-1], values[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
        else:
            # contract toward the better of the reflected/worst points
            if fr < values[-1]:
                xc = centroid + _CONTRACT * (xr - centroid)
            else:
                xc = centroid + _CONTRACT * (simplex[-1] - centroid)
            fc = float(objective(xc)); n_eval += 1
            if fc < min(fr, values[-1]):
                simplex[-1], values[-1] = xc, fc
            else:
                # shrink everything toward the best vertex
                simplex[1:] = simplex[0] + _SHRINK * (simplex[1:] - simplex[0])
                values[1:] = [float(objective(v)) for v in simplex[1:]]
                n_eval += n

    order = np.argsort(values)
    return NelderMeadResult(simplex[order[0]].copy(), values[order[0]], n_eval, False)
