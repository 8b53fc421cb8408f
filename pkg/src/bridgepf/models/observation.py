"""Observation densities linking a state component to a measurement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def epsilon_ball_loglik(y, x_component, eps):
    """Uniform-ball log-likelihood: log(1/(2 eps)) iff |y - x| <= eps.

    The interval is closed at both boundaries so that tests on the
    measure-zero edge are deterministic. Elementwise over particles.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x_component, dtype=float)
    inside = np.abs(y - x) <= eps
    return np.where(inside, -np.log(2.0 * eps), -np.inf)


@dataclass(frozen=True)
class EpsilonBallObservation:
    """y ~ U(x[c] - eps, x[c] + eps) on state component c."""

    eps: float
    component: int = 0

    def loglik(self, y, states):
        return epsilon_ball_loglik(float(y), np.asarray(states)[:, self.component], self.eps)

    def sample(self, state, rng: np.random.Generator):
        x = float(np.asarray(state).reshape(-1)[self.component])
        return rng.uniform(x - self.eps, x + self.eps)


@dataclass(frozen=True)
class GaussianObservation:
    """y ~ N(x[c], var) on state component c."""

    var: float
    component: int = 0

    def loglik(self, y, states):
        if self.var <= 0:
            raise ValueError("var must be positive")
        x = np.asarray(states)[:, self.component]
        resid = float(y) - x
        return -0.5 * (np.log(2.0 * np.pi * self.var) + resid * resid / self.var)

    def sample(self, state, rng: np.random.Generator):
        x = float(np.asarray(state).reshape(-1)[self.component])
        return x + np.sqrt(self.var) * rng.standard_normal()
