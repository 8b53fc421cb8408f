"""Particle marginal Metropolis-Hastings over model parameters.

The sampler carries a pseudo-marginal likelihood: any filter's
normalising-constant estimate stands in for the intractable likelihood
inside a plain random-walk Metropolis acceptance ratio. The retained
estimate is never recomputed on rejection, which is what makes the
stationary distribution exact despite the noise. A degenerate filter
run (log_z = -inf) simply rejects, and proposals outside the prior
support reject without spending a filter call.

Bounded parameters may be proposed on unconstrained scales (log for
positives, logit for intervals) with the Jacobian folded into the
target, which avoids wasting moves on boundary rejections; a raw-scale
walk is the default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# ---------------------------------------------------------------------------
# Priors


@dataclass(frozen=True)
class UniformPrior:
    low: float
    high: float

    def logpdf(self, x: float) -> float:
        if self.low <= x <= self.high:
            return -math.log(self.high - self.low)
        return -math.inf

    def sample(self, rng) -> float:
        return rng.uniform(self.low, self.high)


@dataclass(frozen=True)
class GammaPrior:
    shape: float
    scale: float = 1.0

    def logpdf(self, x: float) -> float:
        if x <= 0:
            return -math.inf
        return ((self.shape - 1.0) * math.log(x) - x / self.scale
                - self.shape * math.log(self.scale) - math.lgamma(self.shape))

    def sample(self, rng) -> float:
        return rng.gamma(self.shape, self.scale)


@dataclass(frozen=True)
class NormalPrior:
    mean: float
    var: float

    def logpdf(self, x: float) -> float:
        return -0.5 * (math.log(2 * math.pi * self.var)
                       + (x - self.mean) ** 2 / self.var)

    def sample(self, rng) -> float:
        return rng.normal(self.mean, math.sqrt(self.var))


def log_prior(theta, priors) -> float:
    """Sum of component prior log-densities; -inf outside support."""
    theta = np.asarray(theta, dtype=float)
    if theta.size != len(priors):
        raise ValueError("parameter vector and prior list disagree in length")
    total = 0.0
    for x, prior in zip(theta, priors):
        lp = prior.logpdf(float(x))
        if lp == -math.inf:
            return -math.inf
        total += lp
    return total


# ---------------------------------------------------------------------------
# Parameter transforms for proposing on unconstrained scales


class IdentityTransform:
    def forward(self, x):
        return x

    def inverse(self, y):
        return y

    def log_jacobian(self, y):
        # |d theta / d eta| = 1
        return 0.0


class LogTransform:
    """theta = exp(eta) for positive parameters."""

    def forward(self, x):
        return math.log(x)

    def inverse(self, y):
        return math.exp(y)

    def log_jacobian(self, y):
        return y


class LogitTransform:
    """theta in (low, high) via the logistic map."""

    def __init__(self, low: float, high: float):
        self.low, self.high = low, high

    def forward(self, x):
        p = (x - self.low) / (self.high - self.low)
        return math.log(p / (1.0 - p))

    def inverse(self, y):
        p = 1.0 / (1.0 + math.exp(-y))
        return self.low + (self.high - self.low) * p

    def log_jacobian(self, y):
        # d theta / d eta = (high - low) * p * (1 - p)
        p = 1.0 / (1.0 + math.exp(-y))
        return math.log(self.high - self.low) + math.log(p) + math.log1p(-p)


def transform_forward(theta, transforms):
    return np.array([t.forward(float(x)) for x, t in zip(theta, transforms)])


def transform_inverse(eta, transforms):
    return np.array([t.inverse(float(y)) for y, t in zip(eta, transforms)])


def transform_log_jacobian(eta, transforms) -> float:
    return float(sum(t.log_jacobian(float(y)) for y, t in zip(eta, transforms)))


# ---------------------------------------------------------------------------
# Random-walk proposal


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """Matrix square root of a symmetric PSD matrix, tolerant of zeros."""
    cov = np.asarray(cov, dtype=float)
    if not np.allclose(cov, cov.T):
        raise ValueError("proposal covariance must be symmetric")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(cov)
        if np.any(vals < -1e-12 * max(1.0, float(np.max(np.abs(vals))))):
            raise ValueError("proposal covariance must be positive semidefinite")
        return vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None)))


@dataclass
class ProposalSpec:
    """Gaussian random-walk proposal with a fixed covariance."""

    cov: np.ndarray
    _root: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        self._root = _psd_sqrt(self.cov)

    @property
    def dim(self) -> int:
        return self.cov.shape[0]


def propose(theta, spec: ProposalSpec, rng: np.random.Generator):
    """theta + L xi with L L' = cov; symmetric, so it cancels in the ratio."""
    theta = np.asarray(theta, dtype=float)
    return theta + spec._root @ rng.standard_normal(spec.dim)


def pilot_proposal(samples) -> np.ndarray:
    """Proposal covariance from pilot draws: (2.38^2 / d) * sample covariance."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    d = samples.shape[1]
    cov = np.cov(samples, rowvar=False).reshape(d, d)
    return (2.38 ** 2 / d) * cov


# ---------------------------------------------------------------------------
# The chain


@dataclass
class ChainState:
    theta: np.ndarray
    log_prior: float
    log_z: float
    accepted: int = 0
    iteration: int = 0


@dataclass
class ChainTrace:
    thetas: np.ndarray     # (steps, d)
    log_zs: np.ndarray     # (steps,)
    accepted: np.ndarray   # (steps,) bool
    acceptance_rate: float

    def __len__(self):
        return len(self.log_zs)


def pmmh_step(state: ChainState, loglik, priors, spec: ProposalSpec,
              rng: np.random.Generator, transforms=None) -> ChainState:
    """One Metropolis step with a pseudo-marginal likelihood.

    loglik(theta, rng) -> log_z runs the filter; it is called exactly
    once per proposal inside the prior support and never for the
    retained state.
    """
    if transforms is None:
        eta = np.asarray(state.theta, dtype=float)
        eta_new = propose(eta, spec, rng)
        theta_new = eta_new
        jac_cur = jac_new = 0.0
    else:
        eta = transform_forward(state.theta, transforms)
        eta_new = propose(eta, spec, rng)
        theta_new = transform_inverse(eta_new, transforms)
        jac_cur = transform_log_jacobian(eta, transforms)
        jac_new = transform_log_jacobian(eta_new, transforms)

    lp_new = log_prior(theta_new, priors)
    out = ChainState(theta=state.theta, log_prior=state.log_prior,
                     log_z=state.log_z, accepted=state.accepted,
                     iteration=state.iteration + 1)
    if lp_new == -math.inf:
        return out  # reject without running the filter

    log_z_new = float(loglik(theta_new, rng))
    if log_z_new == -math.inf:
        return out  # degenerate filter run rejects automatically

    log_ratio = (log_z_new + lp_new + jac_new) - (state.log_z + state.log_prior + jac_cur)
    if log_ratio >= 0.0 or rng.uniform() < math.exp(log_ratio):
        out.theta = np.asarray(theta_new, dtype=float)
        out.log_prior = lp_new
        out.log_z = log_z_new
        out.accepted = state.accepted + 1
    return out


def run_pmmh(theta0, n_steps, loglik, priors, spec: ProposalSpec,
             rng: np.random.Generator, burn_in: int = 0,
             transforms=None) -> ChainTrace:
    """Run a PMMH chain and return the post-burn-in trace."""
    theta0 = np.asarray(theta0, dtype=float)
    lp0 = log_prior(theta0, priors)
    if lp0 == -math.inf:
        raise ValueError("initial parameters lie outside the prior support")
    log_z0 = float(loglik(theta0, rng))
    if not np.isfinite(log_z0):
        raise ValueError("initial likelihood estimate is not finite")

    state = ChainState(theta=theta0, log_prior=lp0, log_z=log_z0)
    total = burn_in + n_steps
    thetas = np.empty((n_steps, theta0.size))
    log_zs = np.empty(n_steps)
    accepted = np.zeros(n_steps, dtype=bool)
    for i in range(total):
        prev_count = state.accepted
        state = pmmh_step(state, loglik, priors, spec, rng, transforms=transforms)
        if i >= burn_in:
            j = i - burn_in
            thetas[j] = state.theta
            log_zs[j] = state.log_z
            accepted[j] = state.accepted > prev_count
    rate = float(np.mean(accepted)) if n_steps else 0.0
    return ChainTrace(thetas=thetas, log_zs=log_zs, accepted=accepted,
                      acceptance_rate=rate)
