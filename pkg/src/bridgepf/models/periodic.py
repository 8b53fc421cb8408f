"""Periodic-drift diffusion dX = sin(X - theta) dt + dW.

A multimodal toy process: paths linger near the stable points
theta + pi (mod 2*pi) and occasionally hop between them. There is no
closed-form transition density, so simulation uses Euler-Maruyama at a
fine step and the pointwise density is only ever evaluated over one
short final interval, where the one-step Euler-Maruyama Gaussian is a
reasonable stand-in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import substep_count
from .integrators import euler_maruyama_logpdf, euler_maruyama_step


@dataclass(frozen=True)
class PdParams:
    theta: float = np.pi  # phase offset; diffusion is fixed at one


class PeriodicDriftModel:
    """Scalar periodic-drift process; states have shape (N, 1)."""

    dim = 1

    def __init__(self, params: PdParams, sim_step: float = 0.075):
        self.params = params
        self.sim_step = sim_step

    def drift(self, x, t):
        return np.sin(x - self.params.theta)

    def diffusion(self, x, t):
        return np.ones_like(np.asarray(x, dtype=float))

    def simulate(self, states, t0, t1, substep, rng: np.random.Generator):
        step = substep if substep is not None else self.sim_step
        n_sub = substep_count(t0, t1, step)
        h = (t1 - t0) / n_sub
        x = np.asarray(states, dtype=float)
        t = t0
        for _ in range(n_sub):
            x = euler_maruyama_step(self.drift, self.diffusion, x, t, h, rng)
            t += h
        return x

    def transition_logpdf(self, target, states, dt):
        """One-step Euler-Maruyama approximation of log p(target | state, dt).

        Only credible for dt no larger than the weighting interval; it
        is used to close the final bridge interval, never to simulate.
        """
        x = np.asarray(states, dtype=float)[:, 0]
        y = float(np.asarray(target).reshape(-1)[0])
        return euler_maruyama_logpdf(y, x, 0.0, dt, self.drift, self.diffusion)
