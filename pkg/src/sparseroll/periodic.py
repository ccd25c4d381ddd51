"""Optimal periodic actuation policies and their closed-form costs.

A period-p policy applies u = F x_hat every p steps and zero in between.
The gain comes from the lifted Riccati design; the associated discounted
and long-run average costs have closed forms evaluated here, which is what
makes the periodic family a convenient base policy for rollout.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import AssumptionViolatedError
from .plant import DiscreteModel, LiftedSystem, build_lifted
from .riccati import (
    RiccatiProblem,
    check_observability,
    check_pathological_sampling,
    psd_sqrt,
    solve_dare,
)


@dataclass(frozen=True)
class PeriodicPolicy:
    """Feedback gain, lifted cost matrix and gain quadratic for one period."""

    period: int
    feedback_gain: np.ndarray
    cost_matrix: np.ndarray
    gain_quadratic: np.ndarray
    discount: float


def design_periodic(dm: DiscreteModel, q_weight, r_weight, p: int, alpha: float = 1.0,
                    tol: float = 1e-10, max_iter: int = 100_000) -> PeriodicPolicy:
    """Design the optimal period-p policy at discount alpha.

    Validates non-pathological sampling for p and observability of the
    state-weight pair before solving the lifted Riccati equation.
    """
    q_weight = np.atleast_2d(np.asarray(q_weight, dtype=float))
    r_weight = np.atleast_2d(np.asarray(r_weight, dtype=float))
    if not check_pathological_sampling(dm.a, p):
        raise AssumptionViolatedError(
            f"pathological sampling: lifting by p={p} breaks stabilizability"
        )
    if not check_observability(dm.a, psd_sqrt(q_weight)):
        raise AssumptionViolatedError("(A, Q^{1/2}) must be observable")
    lift = build_lifted(dm, q_weight, r_weight, p, alpha)
    prob = RiccatiProblem(
        state_matrix=lift.a_lift,
        input_matrix=lift.b_lift,
        state_weight=lift.q_lift,
        cross_weight=lift.s_lift,
        input_weight=lift.r_lift,
        discount=alpha**p,
    )
    sol = solve_dare(prob, tol=tol, max_iter=max_iter)
    pman = sol.cost_matrix
    denom = alpha**p * (lift.b_lift.T @ pman @ lift.b_lift) + lift.r_lift
    gain_quadratic = sol.gain.T @ denom @ sol.gain
    return PeriodicPolicy(
        period=p,
        feedback_gain=sol.gain,
        cost_matrix=pman,
        gain_quadratic=0.5 * (gain_quadratic + gain_quadratic.T),
        discount=float(alpha),
    )


def periodic_average_cost(pol: PeriodicPolicy, lift: LiftedSystem, err_cov, theta: float) -> float:
    """Long-run average cost of the periodic policy, including theta/p.

    Valid for designs at discount 1 with the stationary filter covariance.
    """
    if pol.discount != 1.0:
        raise ValueError("average cost requires a policy designed at discount 1")
    if pol.period != lift.period:
        raise ValueError("policy and lifted system periods differ")
    err_cov = np.atleast_2d(np.asarray(err_cov, dtype=float))
    p = pol.period
    noise_term = float(np.trace(pol.cost_matrix @ lift.d_lift @ lift.proc_cov_lift @ lift.d_lift.T))
    gain_term = float(np.trace(pol.gain_quadratic @ err_cov))
    return (noise_term + gain_term + lift.d_avg) / p + theta / p


def periodic_discounted_cost(pol: PeriodicPolicy, lift: LiftedSystem, x0_mean, err_cov_seq,
                             theta: float, series_tol: float = 1e-14) -> float:
    """Discounted cost of the periodic policy from the initial information.

    ``err_cov_seq`` lists the filter covariances at successive actuation
    instants; a single matrix (or length-1 sequence) selects the stationary
    case, where the gain-quadratic series sums in closed form.  Longer
    sequences are summed term by term, continuing the final entry
    geometrically until terms fall below ``series_tol`` of the running sum.
    """
    alpha = pol.discount
    if not alpha < 1.0:
        raise ValueError("discounted cost requires a policy designed at discount < 1")
    if pol.period != lift.period:
        raise ValueError("policy and lifted system periods differ")
    p = pol.period
    ap = alpha**p
    x0_mean = np.asarray(x0_mean, dtype=float).reshape(-1)

    covs = np.asarray(err_cov_seq, dtype=float)
    if covs.ndim == 2:
        covs = covs[None, :, :]
    gain_traces = [float(np.trace(pol.gain_quadratic @ s)) for s in covs]

    initial = float(x0_mean @ pol.cost_matrix @ x0_mean + np.trace(pol.cost_matrix @ covs[0]))
    noise = ap / (1.0 - ap) * float(
        np.trace(pol.cost_matrix @ lift.d_lift @ lift.proc_cov_lift @ lift.d_lift.T)
    )

    if len(gain_traces) == 1:
        series = gain_traces[0] / (1.0 - ap)
    else:
        series = 0.0
        weight = 1.0
        for tr in gain_traces[:-1]:
            series += weight * tr
            weight *= ap
        tail = gain_traces[-1]
        while True:
            term = weight * tail
            series += term
            weight *= ap
            if abs(term) <= series_tol * max(abs(series), 1e-300):
                break

    return initial + noise + series + lift.d_disc + theta / (1.0 - ap)


def best_periodic(dm: DiscreteModel, q_weight, r_weight, candidates, err_cov, theta: float):
    """Smallest-period argmin of the average cost over candidate periods."""
    if not candidates:
        raise ValueError("candidate set must be non-empty")
    best_p, best_cost = None, None
    for p in sorted(set(int(p) for p in candidates)):
        pol = design_periodic(dm, q_weight, r_weight, p, alpha=1.0)
        lift = build_lifted(dm, q_weight, r_weight, p, alpha=1.0)
        cost = periodic_average_cost(pol, lift, err_cov, theta)
        if best_cost is None or cost < best_cost:
            best_p, best_cost = p, cost
    return best_p, best_cost
