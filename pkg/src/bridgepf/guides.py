"""Guide (weight) functions that score particles against a future target.

A guide approximates the predictive density of the terminal state or
observation given the current state, and enters the filter only through
ratios at consecutive weighting times, so its overall normalisation is
irrelevant. Every guide implements

    log_value(states, t, target, t_target) -> (N,) log values

for an (N, d) particle array at time t against the target observed (or
pinned) at t_target >= t.

Available families:

* ExactTransitionGuide: the model's own transition density (only for
  models that can evaluate it pointwise; the optimal choice).
* GpGuide: a stationary Gaussian process fitted to the observed series,
  conditioned on the current state only, optionally variance-inflated
  and tempered.
* PdGuide: the bespoke multimodal form for the periodic-drift process.
* ConstantGuide: g == 1, which turns the bridge filter into its
  no-lookahead specialisations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .optimize import nelder_mead

_LOG_2PI = math.log(2.0 * math.pi)
_TWO_PI = 2.0 * math.pi


class ConstantGuide:
    """g == 1 everywhere; intermediate weighting becomes a no-op."""

    def log_value(self, states, t, target, t_target):
        return np.zeros(np.asarray(states).shape[0])


class ExactTransitionGuide:
    """q(target | x) := the model's transition density over the remaining gap."""

    def __init__(self, model):
        if not hasattr(model, "transition_logpdf"):
            raise TypeError("exact-transition guide needs a model with a "
                            "pointwise transition density")
        self.model = model

    def log_value(self, states, t, target, t_target):
        return self.model.transition_logpdf(target, states, t_target - t)


# ---------------------------------------------------------------------------
# Gaussian-process guides


def sq_exp_cov(dt, alpha, beta):
    """Squared-exponential covariance alpha * exp(-dt^2 / (2 beta))."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    dt = np.asarray(dt, dtype=float)
    return alpha * np.exp(-(dt * dt) / (2.0 * beta))


def gp_condition(x_k, t_k, t_n, alpha, beta):
    """Mean and variance of the process at t_n given its value at t_k.

    Conditioning on the current state only keeps the cost linear in the
    number of particles. The variance lies in [0, alpha] for any gap.
    """
    if t_k > t_n:
        raise ValueError("t_k must not exceed t_n")
    c = sq_exp_cov(t_n - t_k, alpha, beta)
    mu = (c / alpha) * np.asarray(x_k, dtype=float)
    var = np.maximum(0.0, alpha - c * c / alpha)  # clamp float dust at gap 0
    return mu, var


@dataclass(frozen=True)
class GpGuideParams:
    """Hyperparameters of a squared-exponential GP guide.

    alpha, beta live on the standardized scale of the fitted series;
    shift/scale record the affine map from raw data to that scale.
    obs_var is the raw-scale observation variance (epsilon^2 for a ball
    observation), inflation >= 1 widens the predictive variance, and
    power in (0, 1] tempers the density.
    """

    alpha: float
    beta: float
    inflation: float = 1.0
    power: float = 1.0
    obs_var: float = 0.0
    shift: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.inflation < 1.0:
            raise ValueError("inflation must be >= 1")
        if not (0.0 < self.power <= 1.0):
            raise ValueError("power must lie in (0, 1]")
        if self.scale <= 0:
            raise ValueError("scale must be positive")


def gp_guide_logpdf(target, x_k, t_k, t_n, params: GpGuideParams, mode="state"):
    """Tempered, inflated Gaussian log-score of target given the state.

    mode "state" scores a pinned terminal state (no observation noise);
    mode "observation" adds the observation variance. Elementwise over
    particles.
    """
    if mode not in ("state", "observation"):
        raise ValueError(f"unknown guide mode {mode!r}")
    xs = (np.asarray(x_k, dtype=float) - params.shift) / params.scale
    ys = (float(target) - params.shift) / params.scale
    mu, var = gp_condition(xs, t_k, t_n, params.alpha, params.beta)
    if mode == "observation":
        var = var + params.obs_var / (params.scale * params.scale)
    var = params.inflation * var
    if var <= 0.0:
        # conditioning on the same instant: a point mass
        return np.where(ys == mu, np.inf, -np.inf)
    resid = ys - mu
    logpdf = -0.5 * (_LOG_2PI + np.log(var) + resid * resid / var) - np.log(params.scale)
    return params.power * logpdf


class GpGuide:
    """GP guide over one or more observed state components.

    components maps a state-component index to its fitted parameters;
    an indirect target supplies one measurement per component, in the
    same order, while a pinned target is a full state vector indexed by
    component. Log-scores of the components add up (independence across
    observed components).
    """

    def __init__(self, components, mode="observation"):
        if isinstance(components, GpGuideParams):
            components = [(0, components)]
        self.components = list(components)
        if not self.components:
            raise ValueError("need at least one scored component")
        self.mode = mode

    def log_value(self, states, t, target, t_target):
        states = np.asarray(states, dtype=float)
        target = np.asarray(target, dtype=float).reshape(-1)
        total = np.zeros(states.shape[0])
        for j, (comp, params) in enumerate(self.components):
            y = target[comp] if self.mode == "state" else target[j]
            total += gp_guide_logpdf(y, states[:, comp], t, t_target, params, self.mode)
        return total


def gp_marginal_loglik(times, values, alpha, beta, nugget):
    """Zero-mean GP marginal log-likelihood with a jitter nugget.

    Raises on a kernel matrix that is not positive definite even after
    the nugget.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 2:
        raise ValueError("need at least two points")
    if len(np.unique(times)) != times.size:
        raise ValueError("times must be distinct")
    gaps = times[:, None] - times[None, :]
    k = sq_exp_cov(gaps, alpha, beta) + nugget * np.eye(times.size)
    try:
        chol = np.linalg.cholesky(k)
    except np.linalg.LinAlgError:
        raise ValueError("kernel matrix not positive definite") from None
    z = np.linalg.solve(chol, values)
    return float(-0.5 * z @ z - np.sum(np.log(np.diag(chol)))
                 - 0.5 * times.size * _LOG_2PI)


@dataclass
class GpFitResult:
    params: GpGuideParams
    loglik: float
    converged: bool
    degenerate: bool = False


_NUGGET_REL = 1e-8
_ALPHA_FLOOR = 1e-12


def fit_gp_guide(times, values, standardize=True, inflation=1.0, power=1.0,
                 obs_var=0.0) -> GpFitResult:
    """Maximum-likelihood squared-exponential fit to one observed series.

    The series is centred (and by default standardized) before fitting a
    zero-mean GP; the affine transform is stored on the returned
    parameters so scoring happens on the same scale. Optimisation runs
    over (log alpha, log beta) to keep both positive.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 3:
        raise ValueError("need at least three points to fit a guide")
    shift = float(np.mean(values))
    sd = float(np.std(values))
    if sd == 0.0:
        # constant series carries no signal; pin alpha at the floor
        params = GpGuideParams(alpha=_ALPHA_FLOOR, beta=1.0, inflation=inflation,
                               power=power, obs_var=obs_var, shift=shift, scale=1.0)
        return GpFitResult(params, -np.inf, converged=True, degenerate=True)
    scale = sd if standardize else 1.0
    v = (values - shift) / scale

    span = float(times.max() - times.min())
    x0 = np.array([np.log(max(np.var(v), 1e-6)), 2.0 * np.log(max(span / 4.0, 1e-3))])

    def objective(theta):
        alpha, beta = np.exp(theta)
        if not (np.isfinite(alpha) and np.isfinite(beta)) or alpha < _ALPHA_FLOOR:
            return np.inf
        try:
            return -gp_marginal_loglik(times, v, alpha, beta, _NUGGET_REL * alpha)
        except ValueError:
            return np.inf

    res = nelder_mead(objective, x0, xtol=1e-6, ftol=1e-9, max_eval=500,
                      initial_step=0.5)
    alpha, beta = np.exp(res.x)
    params = GpGuideParams(alpha=float(alpha), beta=float(beta), inflation=inflation,
                           power=power, obs_var=obs_var, shift=shift, scale=scale)
    return GpFitResult(params, -res.fun, converged=res.converged)


# ---------------------------------------------------------------------------
# Periodic-drift guide


@dataclass(frozen=True)
class PdGuideParams:
    """Parameters of the periodic multimodal guide.

    eps keeps the density positive at the cosine troughs, sigma2 is the
    variance growth per unit of remaining time, power tempers.
    """

    eps: float
    sigma2: float
    power: float = 0.25

    def __post_init__(self):
        if self.eps <= 0 or self.sigma2 <= 0:
            raise ValueError("eps and sigma2 must be positive")
        if not (0.0 < self.power <= 1.0):
            raise ValueError("power must lie in (0, 1]")


def nearest_period_multiple(x):
    """Round to the nearest multiple of 2*pi; exact half gaps round down."""
    u = np.asarray(x, dtype=float) / _TWO_PI
    return _TWO_PI * np.ceil(u - 0.5)


def pd_normalizer(params: PdGuideParams, gap):
    """Closed-form integral of the unnormalised periodic guide over the line."""
    s2 = params.sigma2 * gap
    return math.sqrt(2.0 * math.pi * s2) * (math.exp(-0.5 * s2) + 1.0 + params.eps)


def pd_guide_logpdf(x_n, x_k, t_k, t_n, params: PdGuideParams):
    """Tempered log-density of the periodic guide; elementwise over particles.

    The density recentres each particle on its nearest period multiple,
    mixes a cosine bump structure with a Gaussian envelope whose
    variance grows with the remaining gap, and is strictly positive.
    """
    gap = t_n - t_k
    if gap <= 0:
        raise ValueError("t_k must precede t_n")
    anchor = nearest_period_multiple(x_k)
    delta = float(x_n) - anchor
    s2 = params.sigma2 * gap
    raw = (np.log(np.cos(delta) + 1.0 + params.eps)
           - delta * delta / (2.0 * s2)
           - math.log(pd_normalizer(params, gap)))
    return params.power * raw


class PdGuide:
    def __init__(self, params: PdGuideParams):
        self.params = params

    def log_value(self, states, t, target, t_target):
        x = np.asarray(states, dtype=float)[:, 0]
        y = float(np.asarray(target).reshape(-1)[0])
        return pd_guide_logpdf(y, x, t, t_target, self.params)


def fit_pd_guide(paths, times, lags, power=0.25, x0=(math.log(0.05), math.log(0.5))):
    """Fit (eps, sigma2) by pooled maximum likelihood over lagged pairs.

    paths is (n_paths, n_times); for every requested lag (in index
    units) all (x_t, x_{t+lag}) pairs across paths enter one pooled
    likelihood, evaluated with the untempered density.
    """
    paths = np.asarray(paths, dtype=float)
    times = np.asarray(times, dtype=float)
    pairs = []
    for lag in lags:
        if lag <= 0 or lag >= times.size:
            raise ValueError(f"lag {lag} out of range")
        gap = float(times[lag] - times[0])
        pairs.append((paths[:, :-lag].ravel(), paths[:, lag:].ravel(), gap))

    def objective(theta):
        eps, sigma2 = np.exp(theta)
        try:
            params = PdGuideParams(eps=float(eps), sigma2=float(sigma2), power=1.0)
        except ValueError:
            return np.inf
        total = 0.0
        for xk, xn, gap in pairs:
            anchor = nearest_period_multiple(xk)
            delta = xn - anchor
            s2 = sigma2 * gap
            total += float(np.sum(np.log(np.cos(delta) + 1.0 + eps)
                                  - delta * delta / (2.0 * s2)))
            total -= delta.size * math.log(pd_normalizer(params, gap))
        return -total

    res = nelder_mead(objective, np.asarray(x0, dtype=float), xtol=1e-7,
                      ftol=1e-7, max_eval=800, initial_step=0.5)
    eps, sigma2 = np.exp(res.x)
    return PdGuideParams(eps=float(eps), sigma2=float(sigma2), power=power)
