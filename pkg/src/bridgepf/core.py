"""Log-domain weight arithmetic, effective sample size and resampling.

All particle weights in this package live in log space; densities of
interest routinely take values around 1e-9 and products of hundreds of
them underflow double precision on the natural scale.
"""

from __future__ import annotations

import numpy as np


def log_sum_exp(v) -> float:
    """Return log(sum(exp(v))) computed with the max-shift trick.

    Returns -inf for an all-(-inf) input. Raises ValueError on empty
    input.
    """
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValueError("log_sum_exp of empty sequence")
    m = np.max(v)
    if not np.isfinite(m):
        # all -inf (a +inf or nan input is propagated as-is)
        return float(m) if m == -np.inf else float(m + np.log(v.size))
    return float(m + np.log(np.sum(np.exp(v - m))))


def normalized_log_weights(logw: np.ndarray) -> np.ndarray:
    """Shift log weights so they sum to one on the natural scale."""
    return logw - log_sum_exp(logw)


def ess_weights(logw) -> float:
    """Effective sample size (sum w)^2 / sum w^2 of log-domain weights.

    Invariant to adding a constant to all log weights. Lies in [1, N]
    for at least one finite weight; returns 0.0 when every particle is
    dead (all weights -inf).
    """
    logw = np.asarray(logw, dtype=float)
    if logw.size == 0:
        raise ValueError("ess_weights of empty sequence")
    m = np.max(logw)
    if m == -np.inf:
        return 0.0
    w = np.exp(logw - m)
    s = np.sum(w)
    return float(s * s / np.sum(w * w))


def resample_trigger(logw, rel_threshold: float) -> bool:
    """True when ESS falls below rel_threshold * N.

    rel_threshold = 0 disables resampling entirely, which reduces the
    filters to their plain importance-sampling specialisations.
    """
    if rel_threshold <= 0.0:
        return False
    n = len(logw)
    return ess_weights(logw) / n < rel_threshold


def _weights_from_log(logw) -> np.ndarray:
    logw = np.asarray(logw, dtype=float)
    m = np.max(logw)
    if m == -np.inf:
        raise ValueError("cannot resample a fully degenerate particle system")
    w = np.exp(logw - m)
    return w / np.sum(w)


def resample_multinomial(logw, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n parent indices i.i.d. with probability proportional to exp(logw)."""
    w = _weights_from_log(logw)
    return rng.choice(len(w), size=n, replace=True, p=w)


def resample_systematic(logw, n: int, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling: one uniform offset, n evenly spaced points.

    The count of index j is floor(n*W_j) or ceil(n*W_j), which gives a
    much lower selection variance than multinomial resampling.
    """
    w = _weights_from_log(logw)
    positions = (rng.uniform() + np.arange(n)) / n
    cdf = np.cumsum(w)
    cdf[-1] = 1.0  # guard against rounding pushing the last edge below 1
    return np.searchsorted(cdf, positions, side="right").clip(max=len(w) - 1)


_RESAMPLERS = {
    "systematic": resample_systematic,
    "multinomial": resample_multinomial,
}


def get_resampler(name: str):
    try:
        return _RESAMPLERS[name]
    except KeyError:
        raise ValueError(f"unknown resampler {name!r}; choose from {sorted(_RESAMPLERS)}")
