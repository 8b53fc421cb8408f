"""Stochastic SIR epidemic with random infection and recovery rates.

State vector: [S, I, R, log beta, log nu]. The compartment flows are

    dS/dt = -beta(t) S I
    dI/dt =  beta(t) S I - nu(t) I
    dR/dt =  nu(t) I

with log beta(t) and log nu(t) each following a mean-reverting process
whose Wiener increment is realised as a discrete noise innovation: one
draw dW ~ N(0, dt) per simulation substep, held constant through that
substep and entering the ODE right-hand side as dW/dt. The resulting
ODE system is integrated with the adaptive embedded Runge-Kutta pair,
so the error control also sets the natural scale for the epsilon-ball
observation model.

S + I + R is conserved exactly by the right-hand side, and beta, nu
stay positive by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import substep_count
from .integrators import RkControl, integrate_adaptive_batch


@dataclass(frozen=True)
class OuHyper:
    """Hyperparameters (level, reversion rate, volatility) of a log-rate."""

    level: float
    rate: float
    vol: float

    def __post_init__(self):
        if self.rate <= 0 or self.vol <= 0:
            raise ValueError("reversion rate and volatility must be positive")

    @property
    def stationary_mean(self):
        return self.level / self.rate

    @property
    def stationary_var(self):
        return self.vol ** 2 / (2.0 * self.rate)


@dataclass(frozen=True)
class SirParams:
    beta: OuHyper
    nu: OuHyper
    population: float = 763.0


def sir_rhs(state, t, dw_beta, dw_nu, dt, p: SirParams):
    """Derivative of [S, I, R, log beta, log nu] with noise forcing dW/dt.

    Vectorised over rows of state; dS + dI + dR is identically zero.
    """
    state = np.atleast_2d(np.asarray(state, dtype=float))
    s, i = state[:, 0], state[:, 1]
    beta = np.exp(state[:, 3])
    nu = np.exp(state[:, 4])
    flow_si = beta * s * i
    flow_ir = nu * i
    out = np.empty_like(state)
    out[:, 0] = -flow_si
    out[:, 1] = flow_si - flow_ir
    out[:, 2] = flow_ir
    out[:, 3] = p.beta.level - p.beta.rate * state[:, 3] + p.beta.vol * dw_beta / dt
    out[:, 4] = p.nu.level - p.nu.rate * state[:, 4] + p.nu.vol * dw_nu / dt
    return out


class SirModel:
    """SIR with stochastic rates; states have shape (N, 5)."""

    dim = 5
    observed_component = 1  # only I is observed

    def __init__(self, params: SirParams, control: RkControl | None = None,
                 initial_infected: float | None = None):
        self.params = params
        self.control = control if control is not None else RkControl(
            abs_tol=1e-2, rel_tol=1e-5, h_init=0.01, h_min=1e-10, h_max=1.0)
        self.initial_infected = initial_infected

    def simulate(self, states, t0, t1, substep, rng: np.random.Generator):
        n_sub = substep_count(t0, t1, substep)
        h = (t1 - t0) / n_sub
        x = np.asarray(states, dtype=float)
        n = x.shape[0]
        t = t0
        for _ in range(n_sub):
            # one Wiener increment per substep, frozen through the ODE solve
            dw = rng.standard_normal((n, 2)) * np.sqrt(h)
            rhs = lambda y, tt, dw=dw: sir_rhs(y, tt, dw[:, 0], dw[:, 1], h, self.params)
            x = integrate_adaptive_batch(rhs, x, t, t + h, self.control)
            t += h
        return x

    def initial_sample(self, n, rng: np.random.Generator):
        """S, I pinned by the first case count; rates from their stationary law."""
        if self.initial_infected is None:
            raise ValueError("initial_infected must be set to draw initial states")
        y0 = float(self.initial_infected)
        x = np.empty((n, 5))
        x[:, 0] = self.params.population - y0
        x[:, 1] = y0
        x[:, 2] = 0.0
        b, v = self.params.beta, self.params.nu
        x[:, 3] = b.stationary_mean + np.sqrt(b.stationary_var) * rng.standard_normal(n)
        x[:, 4] = v.stationary_mean + np.sqrt(v.stationary_var) * rng.standard_normal(n)
        return x
