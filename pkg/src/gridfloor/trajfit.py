"""Physics-regularized trajectory refinement.

Given per-frame asymmetric-Gaussian position estimates, fits the positions
of all frames at once by maximizing the sum of per-frame log-likelihoods
minus velocity/acceleration penalties between consecutive frames. The
penalty thresholds come from the kinematics of the training labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .convnet import asym_gauss_nll, asym_gauss_nll_grads
from .errors import CalibrationError, FitError, OrderingError

PERCENTILE = 99.5
VELOCITY_GAIN = 10.0  # exponent slope of the velocity penalty
ACCEL_GAIN = 3.0  # exponent slope of the acceleration penalty above threshold


@dataclass(frozen=True)
class RegParams:
    """Kinematic bounds: velocity (m/s) and acceleration (m/s^2)."""

    c_v: float
    c_a: float

    def __post_init__(self):
        if not (self.c_v > 0 and self.c_a > 0):
            raise ValueError("kinematic bounds must be positive")


@dataclass
class FrameEstimate:
    t: float
    mu_x: float
    mu_y: float
    sigma_x: float
    sigma_y: float
    r_x: float
    r_y: float


@dataclass
class FittedTrajectory:
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    objective: float
    iterations: int


def kinematics(x, y, t):
    """Per consecutive pair: |v| = hypot(dx, dy) / dt and |a| = |v| / dt.

    Both sequences have length n - 1; |a| is the literal per-pair quantity,
    not a second difference.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if len(t) < 2:
        raise ValueError("need at least two samples")
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise OrderingError("timestamps must strictly increase")
    v = np.hypot(np.diff(x), np.diff(y)) / dt
    return v, v / dt


def lambda_v(v_abs, c_v: float):
    """exp(10 (|v| - c_v)) above the bound, zero on [0, c_v]."""
    scalar = np.asarray(v_abs).ndim == 0
    v = np.atleast_1d(np.asarray(v_abs, dtype=np.float64))
    out = np.zeros_like(v)
    hot = v > c_v
    with np.errstate(over="ignore"):
        out[hot] = np.exp(VELOCITY_GAIN * (v[hot] - c_v))
    return float(out[0]) if scalar else out


def lambda_a(a_abs, c_a: float):
    """-2 c_a + exp(3 |a|) above the bound, -2 c_a + exp(2 c_a + |a|) below;
    continuous at |a| = c_a."""
    a = np.asarray(a_abs, dtype=np.float64)
    with np.errstate(over="ignore"):
        out = np.where(a > c_a, np.exp(ACCEL_GAIN * a), np.exp(2.0 * c_a + a)) - 2.0 * c_a
    return float(out) if out.ndim == 0 else out


def _lambda_v_slope(v, c_v):
    out = np.zeros_like(v)
    hot = v > c_v
    with np.errstate(over="ignore"):
        out[hot] = VELOCITY_GAIN * np.exp(VELOCITY_GAIN * (v[hot] - c_v))
    return out


def _lambda_a_slope(a, c_a):
    with np.errstate(over="ignore"):
        return np.where(
            a > c_a, ACCEL_GAIN * np.exp(ACCEL_GAIN * a), np.exp(2.0 * c_a + a)
        )


def calibrate_limits(runs) -> RegParams:
    """Kinematic bounds as the 99.5th percentile of |v| and |a| over the
    training labels of one or more runs.

    runs: sequence of (x, y, t) label arrays; pairs never span run borders.
    """
    v_all, a_all = [], []
    total = 0
    for x, y, t in runs:
        total += len(np.asarray(t))
        if len(np.asarray(t)) < 2:
            continue
        v, a = kinematics(x, y, t)
        v_all.append(v)
        a_all.append(a)
    if total < 3 or not v_all:
        raise CalibrationError("need at least three labeled frames")
    v = np.concatenate(v_all)
    a = np.concatenate(a_all)
    c_v = float(np.percentile(v, PERCENTILE))
    c_a = float(np.percentile(a, PERCENTILE))
    if c_v <= 0 or c_a <= 0:
        raise CalibrationError("labels are degenerate (no motion)")
    return RegParams(c_v=c_v, c_a=c_a)


def _estimate_arrays(estimates):
    t = np.array([e.t for e in estimates], dtype=np.float64)
    mu = np.array([[e.mu_x, e.mu_y] for e in estimates], dtype=np.float64)
    sigma = np.array([[e.sigma_x, e.sigma_y] for e in estimates], dtype=np.float64)
    r = np.array([[e.r_x, e.r_y] for e in estimates], dtype=np.float64)
    if np.any(sigma <= 0) or np.any(r <= 0):
        raise FitError("sigma and r must be positive")
    if len(t) > 1 and np.any(np.diff(t) <= 0):
        raise OrderingError("estimate timestamps must strictly increase")
    return t, mu, sigma, r


def objective(x, y, estimates, params: RegParams) -> float:
    """Sum of per-frame log-likelihoods minus the summed kinematic penalties."""
    t, mu, sigma, r = _estimate_arrays(estimates)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pos = np.stack([x, y], axis=1)
    loglik = -float(asym_gauss_nll(pos, mu, sigma, r).sum())
    if len(t) < 2:
        return loglik
    v, a = kinematics(x, y, t)
    penalty = float(lambda_v(v, params.c_v).sum() + lambda_a(a, params.c_a).sum())
    return loglik - penalty


def objective_gradient(x, y, estimates, params: RegParams):
    """Analytic d objective / d (x, y)."""
    t, mu, sigma, r = _estimate_arrays(estimates)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pos = np.stack([x, y], axis=1)
    dmu, _, _ = asym_gauss_nll_grads(pos, mu, sigma, r)
    # d loglik / d pos = -d nll / d x evaluated at x = pos (mu fixed): the nll
    # derivative w.r.t. its first argument is the negative of dmu.
    gx = dmu[:, 0].copy()
    gy = dmu[:, 1].copy()
    if len(t) >= 2:
        dt = np.diff(t)
        dx = np.diff(x)
        dy = np.diff(y)
        dist = np.hypot(dx, dy)
        v = dist / dt
        a = v / dt
        slope = _lambda_v_slope(v, params.c_v) / dt + _lambda_a_slope(a, params.c_a) / dt ** 2
        safe = np.where(dist > 0, dist, 1.0)
        ux = np.where(dist > 0, dx / safe, 0.0)
        uy = np.where(dist > 0, dy / safe, 0.0)
        # d penalty / d pos_i: pair i pulls (i) along +u and (i+1) along -u.
        gx[:-1] += slope * ux
        gx[1:] -= slope * ux
        gy[:-1] += slope * uy
        gy[1:] -= slope * uy
    return gx, gy


def fit(
    estimates,
    params: RegParams,
    max_iter: int = 5000,
    tol: float = 1e-8,
    window: int | None = None,
    move_cap: float = 1.0,
) -> FittedTrajectory:
    """Maximize the regularized likelihood from the mu initialization.

    First-order ascent with an adaptive step, backtracking halving, and a
    per-iteration move cap (infinity norm); only improving steps are
    accepted, so the returned objective never falls below the start.
    With a window size, overlapping windows (25%) are fit independently,
    averaged on the overlaps, then polished whole-run.
    """
    estimates = list(estimates)
    if len(estimates) < 2:
        raise FitError("need at least two estimates")
    t, mu, _, _ = _estimate_arrays(estimates)

    if window is not None and 2 < window < len(estimates):
        x, y = _fit_windowed(estimates, params, window, max_iter, tol, move_cap)
        x0, y0 = mu[:, 0], mu[:, 1]
        if objective(x, y, estimates, params) < objective(x0, y0, estimates, params):
            x, y = x0, y0
    else:
        x, y = mu[:, 0].copy(), mu[:, 1].copy()

    j0 = objective(x, y, estimates, params)
    if not math.isfinite(j0):
        raise FitError("objective is not finite at the initialization")

    x, y, j, iters = _ascend(x, y, estimates, params, max_iter, tol, move_cap)
    return FittedTrajectory(x=x, y=y, t=t.copy(), objective=j, iterations=iters)


def _ascend(x, y, estimates, params, max_iter, tol, move_cap):
    # Normalized-gradient ascent: the adaptive state is the move size in
    # meters (infinity norm), so penalty gradients spanning ~1e100 in
    # magnitude cannot freeze the backtracking window.
    x = np.asarray(x, dtype=np.float64).copy()
    y = np.asarray(y, dtype=np.float64).copy()
    j = objective(x, y, estimates, params)
    move = min(0.1, move_cap)
    iters = 0
    while iters < max_iter:
        iters += 1
        gx, gy = objective_gradient(x, y, estimates, params)
        gx = np.clip(gx, -1e300, 1e300)
        gy = np.clip(gy, -1e300, 1e300)
        biggest = max(np.abs(gx).max(), np.abs(gy).max())
        if biggest == 0 or not math.isfinite(biggest):
            break
        improved = False
        while move > 1e-14:
            s = move / biggest
            xn = x + s * gx
            yn = y + s * gy
            jn = objective(xn, yn, estimates, params)
            if jn > j:
                gain = jn - j
                x, y, j = xn, yn, jn
                move = min(move * 1.5, move_cap)
                improved = True
                if gain < tol:
                    return x, y, j, iters
                break
            move *= 0.5
        if not improved:
            break
    return x, y, j, iters


def _fit_windowed(estimates, params, window, max_iter, tol, move_cap):
    n = len(estimates)
    stride = max(1, int(window * 0.75))
    acc_x = np.zeros(n)
    acc_y = np.zeros(n)
    weight = np.zeros(n)
    start = 0
    while True:
        stop = min(start + window, n)
        chunk = estimates[start:stop]
        t, mu, _, _ = _estimate_arrays(chunk)
        x, y, _, _ = _ascend(
            mu[:, 0], mu[:, 1], chunk, params, max_iter, tol, move_cap
        )
        acc_x[start:stop] += x
        acc_y[start:stop] += y
        weight[start:stop] += 1.0
        if stop == n:
            break
        start += stride
    return acc_x / weight, acc_y / weight
