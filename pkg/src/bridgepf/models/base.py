"""Shared conventions for the forward models.

A model is any object with

    dim                 number of state components
    simulate(states, t0, t1, substep, rng) -> new states

where ``states`` is an (N, dim) array of particles. ``simulate`` draws
from the forward law p(dx(t1) | x(t0)) by composing the model's native
stepper over fine substeps; it never needs to evaluate a density.
Models additionally expose what they can support:

    transition_logpdf(target, states, dt)   pointwise density (exact or
                                            a short-interval approximation),
                                            needed to close a pinned bridge
    initial_sample(n, rng)                  draw from p(dx_0) when a run is
                                            not pinned at a known state
    drift(x, t), diffusion(x, t)            SDE coefficients when they exist

All simulation is pure given the generator, so independent runs may
execute concurrently with independent streams.
"""

from __future__ import annotations

import math


def substep_count(t0: float, t1: float, substep: float | None) -> int:
    """Number of equal substeps covering [t0, t1] with length <= substep.

    The interval is always divided evenly, so a substep that does not
    divide the span exactly yields slightly shorter steps rather than a
    ragged final one. The small tolerance absorbs float noise in ratios
    like 0.1 / 0.01.
    """
    span = t1 - t0
    if span <= 0:
        raise ValueError(f"empty simulation interval [{t0}, {t1}]")
    if substep is None or substep <= 0 or substep >= span:
        return 1
    return max(1, math.ceil(span / substep - 1e-9))
