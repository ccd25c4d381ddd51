"""Kalman filtering: steady-state design and per-step estimate updates.

The steady gain solves the predictive covariance fixed point

    X = A X A' + W - A X C' (C X C' + V)^{-1} C X A'

by direct iteration of the covariance recursion.  When the model's initial
covariance already solves this equation the filter is stationary and the
gain/covariances are computed once and reused; otherwise a warning is
issued and the time-varying recursion runs alongside the estimate.
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import NonConvergenceError
from .plant import DiscreteModel
from .riccati import symmetrize


def _filter_step_cov(a, c, w, v, x):
    """Map a predictive covariance through one measurement/time update."""
    innov = c @ x @ c.T + v
    gain_t = np.linalg.solve(innov, c @ x)           # (m, n) = innov^{-1} C X
    post = symmetrize(x - x @ c.T @ gain_t)
    nxt = symmetrize(a @ post @ a.T + w)
    return nxt, post, gain_t.T


def steady_kalman(dm: DiscreteModel, tol: float = 1e-12, max_iter: int = 200_000):
    """Stationary Kalman gain with its posterior and predictive covariances.

    Returns (gain, err_cov, prior_cov).  Requires (A, proc_cov^{1/2})
    controllable and (A, C) observable for convergence.
    """
    a, c, w, v = dm.a, dm.c, dm.proc_cov, dm.meas_cov
    x = dm.init_cov.copy()
    for _ in range(max_iter):
        x_next, post, gain = _filter_step_cov(a, c, w, v, x)
        rel = np.linalg.norm(x_next - x, "fro") / max(1.0, np.linalg.norm(x_next, "fro"))
        x = x_next
        if rel < tol:
            # one more half-step so gain/posterior correspond to the fixed point
            _, post, gain = _filter_step_cov(a, c, w, v, x)
            return gain, post, x
    raise NonConvergenceError(
        f"filter covariance iteration did not converge in {max_iter} iterations",
        residual=float(rel),
        iterations=max_iter,
    )


def stationary_residual(dm: DiscreteModel) -> float:
    """Relative fixed-point residual of init_cov under the predictive map."""
    x = dm.init_cov
    x_next, _, _ = _filter_step_cov(dm.a, dm.c, dm.proc_cov, dm.meas_cov, x)
    return float(np.linalg.norm(x_next - x, "fro") / max(1.0, np.linalg.norm(x, "fro")))


@dataclass(frozen=True)
class EstimatorState:
    """Filter state after processing measurement ``step_index``."""

    estimate: np.ndarray
    err_cov: np.ndarray
    gain: np.ndarray
    prior_cov: np.ndarray
    step_index: int
    stationary: bool = True


def kalman_init(dm: DiscreteModel, y0, steady=None, stationary_tol: float = 1e-8) -> EstimatorState:
    """Initialize the filter from the first measurement.

    ``steady`` may carry a precomputed (gain, err_cov, prior_cov) triple to
    avoid re-solving the steady-state equation per trial.  If the model's
    init_cov does not solve the predictive fixed point, the stationary fast
    path is disabled (with a warning) and time-varying gains are used.
    """
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    if steady is None:
        steady = steady_kalman(dm)
    gain, err_cov, prior_cov = steady
    stationary = stationary_residual(dm) <= stationary_tol
    if not stationary:
        warnings.warn(
            "init_cov does not solve the predictive covariance fixed point; "
            "running the time-varying filter recursion",
            stacklevel=2,
        )
        prior_cov = dm.init_cov
        innov = dm.c @ prior_cov @ dm.c.T + dm.meas_cov
        gain = prior_cov @ dm.c.T @ np.linalg.inv(innov)
        err_cov = symmetrize(prior_cov - gain @ dm.c @ prior_cov)
    estimate = dm.init_mean + gain @ (y0 - dm.c @ dm.init_mean)
    return EstimatorState(
        estimate=estimate,
        err_cov=err_cov,
        gain=gain,
        prior_cov=prior_cov,
        step_index=0,
        stationary=stationary,
    )


def kalman_step(st: EstimatorState, u, y_next, dm: DiscreteModel) -> EstimatorState:
    """Advance the estimate with input u and the next measurement.

    In stationary mode the gain and covariances are reused unchanged; in
    time-varying mode they are propagated alongside the estimate.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    y_next = np.asarray(y_next, dtype=float).reshape(-1)
    a, b, c = dm.a, dm.b, dm.c
    pred = a @ st.estimate + b @ u
    if st.stationary:
        gain, err_cov, prior_cov = st.gain, st.err_cov, st.prior_cov
    else:
        prior_cov = symmetrize(a @ st.err_cov @ a.T + dm.proc_cov)
        innov_cov = c @ prior_cov @ c.T + dm.meas_cov
        gain = prior_cov @ c.T @ np.linalg.inv(innov_cov)
        err_cov = symmetrize(prior_cov - gain @ c @ prior_cov)
    estimate = pred + gain @ (y_next - c @ pred)
    return replace(
        st,
        estimate=estimate,
        err_cov=err_cov,
        gain=gain,
        prior_cov=prior_cov,
        step_index=st.step_index + 1,
    )
