"""Ornstein-Uhlenbeck process with exact transitions.

    dX(t) = (theta1 - theta2 * X(t)) dt + theta3 dW(t)

The conditional law over any horizon is Gaussian:

    mean(dt) = theta1/theta2 + (x - theta1/theta2) * exp(-theta2 * dt)
    var(dt)  = theta3^2 / (2 * theta2) * (1 - exp(-2 * theta2 * dt))

so sampling and pointwise density evaluation are both exact and no
discretisation is needed anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import substep_count

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class OuParams:
    theta1: float
    theta2: float
    theta3: float

    def __post_init__(self):
        if self.theta2 <= 0:
            raise ValueError("theta2 (mean reversion rate) must be positive")
        if self.theta3 <= 0:
            raise ValueError("theta3 (diffusion) must be positive")

    @property
    def stationary_mean(self) -> float:
        return self.theta1 / self.theta2

    @property
    def stationary_var(self) -> float:
        return self.theta3 ** 2 / (2.0 * self.theta2)


def ou_moments(x, dt, p: OuParams):
    """Exact conditional mean and variance of the transition over dt >= 0."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    x = np.asarray(x, dtype=float)
    decay = np.exp(-p.theta2 * dt)
    mean = p.stationary_mean + (x - p.stationary_mean) * decay
    var = p.stationary_var * (1.0 - decay * decay)
    return mean, var


def ou_sample_step(x, dt, p: OuParams, rng: np.random.Generator):
    """Draw x(t + dt) | x(t) = x exactly; elementwise over particles."""
    mean, var = ou_moments(x, dt, p)
    return mean + np.sqrt(var) * rng.standard_normal(np.shape(mean))


def ou_logpdf(x_new, x, dt, p: OuParams):
    """Exact transition log-density, elementwise over particles.

    dt = 0 is the degenerate point mass: -inf off the diagonal, +inf on
    it.
    """
    x_new = np.asarray(x_new, dtype=float)
    mean, var = ou_moments(x, dt, p)
    if dt == 0:
        return np.where(x_new == mean, np.inf, -np.inf)
    resid = x_new - mean
    return -0.5 * (_LOG_2PI + np.log(var) + resid * resid / var)


class OuModel:
    """Scalar OU state process; states have shape (N, 1)."""

    dim = 1

    def __init__(self, params: OuParams):
        self.params = params

    def drift(self, x, t):
        return self.params.theta1 - self.params.theta2 * x

    def diffusion(self, x, t):
        return np.full_like(np.asarray(x, dtype=float), self.params.theta3)

    def simulate(self, states, t0, t1, substep, rng: np.random.Generator):
        n_sub = substep_count(t0, t1, substep)
        h = (t1 - t0) / n_sub
        x = np.asarray(states, dtype=float)
        for _ in range(n_sub):
            x = ou_sample_step(x, h, self.params, rng)
        return x

    def transition_logpdf(self, target, states, dt):
        """log p(target | state, dt) for every particle; returns (N,)."""
        x = np.asarray(states, dtype=float)[:, 0]
        return ou_logpdf(float(np.asarray(target).reshape(-1)[0]), x, dt, self.params)

    def initial_sample(self, n, rng: np.random.Generator):
        """Draw from the stationary law, the natural p(dx_0)."""
        p = self.params
        x = p.stationary_mean + np.sqrt(p.stationary_var) * rng.standard_normal(n)
        return x[:, None]

    def loglik_exact(self, times, values):
        """Closed-form log-likelihood of a directly observed chain.

        The chain likelihood is the product of exact transition
        densities between consecutive observed states.
        """
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float).reshape(len(times))
        total = 0.0
        for j in range(len(times) - 1):
            total += float(
                ou_logpdf(values[j + 1], values[j], times[j + 1] - times[j], self.params)
            )
        return total
