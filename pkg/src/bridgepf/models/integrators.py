"""Forward integrators: Euler-Maruyama and an embedded adaptive Runge-Kutta.

The adaptive scheme is the five-stage, fourth-order low-storage pair
RK4(3)5[2R+]C of Kennedy, Carpenter & Lewis (2000), "Low-storage,
explicit Runge-Kutta schemes for the compressible Navier-Stokes
equations", Appl. Numer. Math. 35:177-219. The third-order embedded
solution provides the local error estimate used for step control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# RK4(3)5[2R+]C coefficients (Kennedy, Carpenter & Lewis 2000). The 2R
# structure means stage i uses A[i][j] = b[j] for j < i-1 and the single
# off-diagonal entry a[i-1]; we expand to plain Butcher form since the
# storage saving is irrelevant here.
_RK_A_SUB = np.array([
    970286171893 / 4311952581923,
    6584761158862 / 12103376702013,
    2251764453980 / 15575788980749,
    26877169314380 / 34165994151039,
])
_RK_B = np.array([
    1153189308089 / 22510343858157,
    1772645290293 / 4653164025191,
    -1672844663538 / 4480602732383,
    2114624349019 / 3568978502595,
    5198255086312 / 14908931495163,
])
_RK_B_EMB = np.array([
    1016888040809 / 7410784769900,
    11231460423587 / 58533540763752,
    -1563879915014 / 6823010717585,
    606302364029 / 971179775848,
    1097981568119 / 3980877426909,
])
_RK_STAGES = 5
_RK_A = np.zeros((_RK_STAGES, _RK_STAGES))
for _i in range(1, _RK_STAGES):
    _RK_A[_i, : _i - 1] = _RK_B[: _i - 1]
    _RK_A[_i, _i - 1] = _RK_A_SUB[_i - 1]
_RK_C = _RK_A.sum(axis=1)
_RK_E = _RK_B - _RK_B_EMB  # error-estimate weights

# proportional controller constants; exponent 1/(q+1) with embedded order q=3
_SAFETY = 0.9
_GROW_MIN = 0.2
_GROW_MAX = 5.0
_ERR_EXP = -0.25


class StepSizeUnderflow(RuntimeError):
    """The controller wants a step below h_min; the problem looks stiff."""


@dataclass(frozen=True)
class RkControl:
    """Error-control settings for the adaptive integrator.

    abs_tol and rel_tol enter the per-component scaled error
    err / (abs_tol + rel_tol * |x|); a step is accepted when the mean
    of the scaled errors is below one.
    """

    abs_tol: float = 1e-2
    rel_tol: float = 1e-5
    h_init: float = 0.1
    h_min: float = 1e-8
    h_max: float = 1.0

    def __post_init__(self):
        if self.abs_tol <= 0:
            raise ValueError("abs_tol must be positive")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be nonnegative")
        if not (0 < self.h_min <= self.h_init <= self.h_max):
            raise ValueError("need 0 < h_min <= h_init <= h_max")


def euler_maruyama_step(drift, diffusion, x, t, dt, rng: np.random.Generator):
    """One locally linear-Gaussian step x + a*dt + B*sqrt(dt)*xi.

    Works elementwise for scalar-state models: x may be an array of
    particles and drift/diffusion return arrays of matching shape.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    a = np.asarray(drift(x, t), dtype=float)
    b = np.asarray(diffusion(x, t), dtype=float)
    return x + a * dt + b * np.sqrt(dt) * rng.standard_normal(x.shape)


def euler_maruyama_logpdf(x_new, x, t, dt, drift, diffusion):
    """Gaussian log-density of x_new under one Euler-Maruyama step from x.

    Mean x + a*dt, variance (B*B')*dt; elementwise over particles for
    scalar states. Raises on a singular (zero) diffusion.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    a = np.asarray(drift(x, t), dtype=float)
    b = np.asarray(diffusion(x, t), dtype=float)
    var = b * b * dt
    if np.any(var <= 0):
        raise ValueError("singular Euler-Maruyama covariance")
    resid = np.asarray(x_new, dtype=float) - (x + a * dt)
    return -0.5 * (np.log(2.0 * np.pi * var) + resid * resid / var)


def _rk_stages(rhs, y, t, h):
    """Evaluate the five stage derivatives; y is (M, d), h is (M,)."""
    hcol = h[:, None]
    k = np.empty((_RK_STAGES, *y.shape))
    for i in range(_RK_STAGES):
        yi = y
        for j in range(i):
            if _RK_A[i, j] != 0.0:
                yi = yi + hcol * _RK_A[i, j] * k[j]
        k[i] = rhs(yi, t + _RK_C[i] * h)
    return k


def adaptive_rk_step(rhs, state, t, h, ctrl: RkControl):
    """One embedded RK step with error control for a single system.

    Returns (state_new, err_components, accepted, h_next). On a rejected
    step state_new is the (unusable) trial state and h_next < h; the
    caller retries. Raises StepSizeUnderflow if the controller asks for
    a step below ctrl.h_min.
    """
    if not (ctrl.h_min <= h <= ctrl.h_max):
        raise ValueError(f"step size {h} outside [{ctrl.h_min}, {ctrl.h_max}]")
    y = np.atleast_2d(np.asarray(state, dtype=float))
    harr = np.array([h])
    k = _rk_stages(lambda yy, tt: np.atleast_2d(rhs(yy[0], tt[0])), y, np.array([t]), harr)
    y_new = y + harr[:, None] * np.tensordot(_RK_B, k, axes=(0, 0))
    err = np.abs(harr[:, None] * np.tensordot(_RK_E, k, axes=(0, 0)))[0]
    scale = ctrl.abs_tol + ctrl.rel_tol * np.abs(y[0])
    mean_scaled = float(np.mean(err / scale))
    accepted = mean_scaled < 1.0
    if mean_scaled == 0.0:
        factor = _GROW_MAX
    else:
        factor = min(_GROW_MAX, max(_GROW_MIN, _SAFETY * mean_scaled ** _ERR_EXP))
    h_next = min(h * factor, ctrl.h_max)
    if not accepted and h_next < ctrl.h_min:
        raise StepSizeUnderflow(f"rejected step would shrink below h_min={ctrl.h_min}")
    return y_new[0], err, accepted, h_next


def integrate_adaptive_batch(rhs, states, t0, t1, ctrl: RkControl):
    """Integrate a batch of independent systems from t0 to t1.

    Each row of states carries its own step size; rows accept or reject
    independently, exactly as if integrated one at a time. rhs maps
    (M, d) states and an (M,) time vector to (M, d) derivatives.
    """
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    y = np.array(states, dtype=float, copy=True)
    m = y.shape[0]
    t = np.full(m, float(t0))
    h = np.full(m, min(ctrl.h_init, t1 - t0))
    tiny = 1e-12 * max(1.0, abs(t1))
    while True:
        active = np.where(t < t1 - tiny)[0]
        if active.size == 0:
            break
        h_try = np.minimum(h[active], t1 - t[active])
        k = _rk_stages(rhs, y[active], t[active], h_try)
        y_new = y[active] + h_try[:, None] * np.tensordot(_RK_B, k, axes=(0, 0))
        err = np.abs(h_try[:, None] * np.tensordot(_RK_E, k, axes=(0, 0)))
        scale = ctrl.abs_tol + ctrl.rel_tol * np.abs(y[active])
        mean_scaled = np.mean(err / scale, axis=1)
        with np.errstate(divide="ignore"):
            factor = np.where(
                mean_scaled == 0.0,
                _GROW_MAX,
                np.clip(_SAFETY * mean_scaled ** _ERR_EXP, _GROW_MIN, _GROW_MAX),
            )
        ok = mean_scaled < 1.0
        acc = active[ok]
        y[acc] = y_new[ok]
        t[acc] = t[acc] + h_try[ok]
        h_next = np.minimum(h_try * factor, ctrl.h_max)
        if np.any(~ok & (h_next < ctrl.h_min)):
            raise StepSizeUnderflow(
                f"rejected step would shrink below h_min={ctrl.h_min}"
            )
        h[active] = np.maximum(h_next, ctrl.h_min)
    return y


def integrate_adaptive(rhs, state, t0, t1, ctrl: RkControl):
    """Single-system convenience wrapper around the batch integrator."""
    batched = lambda y, t: np.atleast_2d(rhs(y[0], t[0]))
    return integrate_adaptive_batch(batched, np.atleast_2d(state), t0, t1, ctrl)[0]
