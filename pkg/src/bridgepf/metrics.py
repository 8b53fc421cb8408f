"""Comparison metrics over replicate normalising-constant estimates.

Replicate estimates are kept as logs (they live around 1e-300 and
smaller on the natural scale for long series) and every statistic here
is computed through shifted exponentials so nothing underflows.

Three per-batch statistics are defined, each optionally divided by the
mean execution time of the batch so that a slower, tighter estimator
must pay for its extra work:

* mse: mean squared deviation of the log-estimates from a reference;
  the time-adjusted form is 1 / (MSE * mean time).
* ess: (sum z)^2 / sum z^2 of the natural-scale estimates, the
  equivalent number of unweighted replicates.
* car: the long-run acceptance rate of a Metropolis chain proposing
  uniformly among the replicates, a direct proxy for pseudo-marginal
  MCMC health.

Higher is better for all three, raw and time-adjusted alike. ESS and
CAR punish high outliers hard, which is exactly the failure mode of an
overconfident filter; MSE does not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import log_sum_exp


@dataclass(frozen=True)
class EstimateBatch:
    """Z replicate log-estimates with their execution times."""

    log_z: np.ndarray
    times: np.ndarray
    true_log_z: float | None = None

    def __post_init__(self):
        lz = np.asarray(self.log_z, dtype=float)
        t = np.asarray(self.times, dtype=float)
        if lz.size < 1:
            raise ValueError("need at least one estimate")
        if t.shape != lz.shape:
            raise ValueError("times and estimates must align")
        if np.any(t <= 0):
            raise ValueError("execution times must be positive")

    @property
    def size(self) -> int:
        return len(self.log_z)

    @property
    def mean_time(self) -> float:
        return float(np.mean(self.times))


@dataclass(frozen=True)
class MetricsReport:
    mse: float
    ess: float
    car: float
    mse_metric: float
    ess_metric: float
    car_metric: float
    mean_time: float


def mse_log(batch: EstimateBatch) -> float:
    """Mean squared deviation of the log-estimates from the reference."""
    if batch.true_log_z is None:
        raise ValueError("mse_log needs a reference value on the batch")
    lz = np.asarray(batch.log_z, dtype=float)
    return float(np.mean((lz - batch.true_log_z) ** 2))


def ess_batch(batch: EstimateBatch) -> float:
    """(sum z)^2 / sum z^2 on the natural scale, computed from logs.

    Invariant to a common log shift; equals Z for identical estimates
    and 1 when a single estimate dominates.
    """
    lz = np.asarray(batch.log_z, dtype=float)
    if np.max(lz) == -np.inf:
        return 0.0
    return float(np.exp(2.0 * log_sum_exp(lz) - log_sum_exp(2.0 * lz)))


def car(batch: EstimateBatch) -> float:
    """Conditional acceptance rate of the batch.

    Normalize the estimates to sum to one, sort ascending, take the
    running cumulative sums c_i, and return (2 * sum_i c_i - 1) / Z.
    Equals 1 for identical estimates and 1/Z for a one-hot batch.
    """
    lz = np.sort(np.asarray(batch.log_z, dtype=float))
    if np.max(lz) == -np.inf:
        raise ValueError("need at least one finite estimate")
    w = np.exp(lz - log_sum_exp(lz))
    c = np.cumsum(w)
    return float((2.0 * np.sum(c) - 1.0) / len(lz))


def time_adjusted(batch: EstimateBatch) -> MetricsReport:
    """All three metrics with their time-adjusted variants.

    A fully dead batch (every estimate -inf) reports zero ESS, an
    undefined CAR and infinite MSE rather than raising, so a grid
    reduction can carry degenerate experiments through.
    """
    mean_t = batch.mean_time
    if np.max(np.asarray(batch.log_z, dtype=float)) == -np.inf:
        return MetricsReport(mse=float("inf"), ess=0.0, car=float("nan"),
                             mse_metric=0.0, ess_metric=0.0,
                             car_metric=float("nan"), mean_time=mean_t)
    ess = ess_batch(batch)
    car_val = car(batch)
    mse = mse_log(batch) if batch.true_log_z is not None else float("nan")
    if np.isnan(mse):
        mse_metric = float("nan")
    elif mse == 0.0:
        mse_metric = float("inf")
    else:
        mse_metric = 1.0 / (mse * mean_t)
    return MetricsReport(
        mse=mse,
        ess=ess,
        car=car_val,
        mse_metric=mse_metric,
        ess_metric=ess / mean_t,
        car_metric=car_val / mean_t,
        mean_time=mean_t,
    )


def ess_mcmc(chain, max_lag: int) -> float:
    """Effective sample size of an MCMC trace: N / (1 + 2 sum_k R(k)).

    Sample autocorrelations R(k) accumulate up to max_lag; the sum stops
    at the first negative value, which is still included, so that an
    anti-correlated chain legitimately reports more effective samples
    than its length. The denominator is floored at 1/N to keep the
    estimate finite when strong negative correlation drives the
    asymptotic formula nonpositive. A matrix chain (one column per
    parameter) reports the smallest per-parameter value; a zero-variance
    chain is degenerate and reported as its own length.
    """
    chain = np.asarray(chain, dtype=float)
    if chain.ndim == 2:
        return min(ess_mcmc(chain[:, j], max_lag) for j in range(chain.shape[1]))
    n = chain.size
    if n <= max_lag:
        raise ValueError("chain must be longer than max_lag")
    centered = chain - chain.mean()
    var = float(np.mean(centered * centered))
    if var <= 1e-28 * max(1.0, float(chain.mean()) ** 2):
        return float(n)
    acf_sum = 0.0
    for k in range(1, max_lag + 1):
        r = float(np.mean(centered[:-k] * centered[k:])) / var
        acf_sum += r
        if r < 0.0:
            break
    return n / max(1.0 + 2.0 * acf_sum, 1.0 / n)
