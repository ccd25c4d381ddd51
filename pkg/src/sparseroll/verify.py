"""End-to-end verification suite run by the CLI ``verify`` command.

Each check is independent, reports a pass/fail with a numeric detail, and
is deterministic for a fixed configuration.  Statistical checks use a
3-standard-error margin so Monte Carlo noise cannot flip them.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad_vec
from scipy.linalg import expm

from .config import ExperimentConfig
from .estimator import steady_kalman
from .oracle import oracle_select
from .periodic import design_periodic, periodic_average_cost
from .plant import build_benchmark_model, build_lifted
from .riccati import RiccatiProblem, solve_dare
from .rollout import build_tables, pattern_score, select_pattern
from .simulate import (
    PeriodicController,
    check_mean_square_stability,
    check_performance_bound,
    estimate_metrics,
    simulate_trial,
    theta_sweep,
)
from .sparse_mpc import build_mpc_problem, solve_sparse_mpc, subgradient_residual

GOLDEN_PHI = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _scalar_dare_check() -> CheckResult:
    prob = RiccatiProblem(
        state_matrix=[[1.0]], input_matrix=[[1.0]], state_weight=[[1.0]],
        cross_weight=[[0.0]], input_weight=[[1.0]], discount=1.0,
    )
    sol = solve_dare(prob)
    err = abs(sol.cost_matrix[0, 0] - GOLDEN_PHI)
    gain_err = abs(sol.gain[0, 0] + GOLDEN_PHI / (GOLDEN_PHI + 1.0))
    ok = err < 1e-10 and gain_err < 1e-10
    return CheckResult("scalar_dare", ok, f"|P - phi| = {err:.3e}, gain err = {gain_err:.3e}")


def _scalar_kalman_check() -> CheckResult:
    from .plant import DiscreteModel

    dm = DiscreteModel(
        a=[[1.0]], b=[[1.0]], c=[[1.0]], proc_cov=[[1.0]], meas_cov=[[1.0]],
        init_mean=[0.0], init_cov=[[1.0]],
    )
    gain, err_cov, prior = steady_kalman(dm)
    e1 = abs(prior[0, 0] - GOLDEN_PHI)
    e2 = abs(gain[0, 0] - GOLDEN_PHI / (GOLDEN_PHI + 1.0))
    e3 = abs(err_cov[0, 0] - (GOLDEN_PHI - 1.0))
    ok = max(e1, e2, e3) < 1e-10
    return CheckResult("scalar_kalman", ok, f"max scalar error = {max(e1, e2, e3):.3e}")


def _discretization_check(cfg: ExperimentConfig) -> CheckResult:
    if cfg.model_source != "builtin-benchmark":
        return CheckResult("discretization_quadrature", True, "skipped (file-based model)")
    cm = build_benchmark_model()
    dm = cfg.build_model()
    w = cm.d_cont @ cm.d_cont.T

    def integrand(tau):
        e = expm(cm.a_cont * tau)
        return e @ w @ e.T

    ref, _ = quad_vec(integrand, 0.0, cfg.sample_period, epsabs=1e-13, epsrel=1e-13)
    err = float(np.abs(dm.proc_cov - ref).max())
    return CheckResult("discretization_quadrature", err < 1e-9, f"max abs deviation = {err:.3e}")


def _base_cost_identity_check(cfg: ExperimentConfig, corrupt_terminal: bool) -> CheckResult:
    dm = cfg.build_model()
    _, err_cov, _ = steady_kalman(dm)
    pol = design_periodic(dm, cfg.q_weight, cfg.r_weight, cfg.p, alpha=cfg.alpha)
    terminal = pol.cost_matrix
    if corrupt_terminal:
        terminal = terminal * 1.10  # deliberate corruption hook for negative tests
    tables = build_tables(dm, cfg.q_weight, cfg.r_weight, terminal, cfg.h, cfg.p,
                          cfg.theta_grid[0], cfg.alpha, err_cov)
    resid = float(
        np.linalg.norm(tables.cost_matrices[0, 0] - pol.cost_matrix, "fro")
        / np.linalg.norm(pol.cost_matrix, "fro")
    )
    return CheckResult("base_cost_identity", resid < 1e-8, f"relative residual = {resid:.3e}")


def _oracle_agreement_check(cfg: ExperimentConfig, n_draws: int = 100) -> CheckResult:
    dm = cfg.build_model()
    _, err_cov, _ = steady_kalman(dm)
    theta = cfg.theta_grid[len(cfg.theta_grid) // 2]
    pol = design_periodic(dm, cfg.q_weight, cfg.r_weight, cfg.p, alpha=cfg.alpha)
    tables = build_tables(dm, cfg.q_weight, cfg.r_weight, pol.cost_matrix, cfg.h, cfg.p,
                          theta, cfg.alpha, err_cov)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed_base)))
    worst = 0.0
    for _ in range(n_draws):
        x = rng.standard_normal(dm.n_states) * rng.uniform(0.05, 2.0)
        res = oracle_select(dm, cfg.q_weight, cfg.r_weight, pol.cost_matrix, cfg.h, cfg.p,
                            theta, cfg.alpha, x, err_cov)
        sel = select_pattern(tables, x, err_cov)
        if sel != res.best_pattern:
            return CheckResult("oracle_agreement", False,
                               f"pattern mismatch {sel} vs {res.best_pattern}")
        score = pattern_score(tables, sel, x, err_cov)
        worst = max(worst, abs(score - res.best_score) / max(1e-12, abs(res.best_score)))
    return CheckResult("oracle_agreement", worst < 1e-8,
                       f"{n_draws} draws, worst relative score gap = {worst:.3e}")


def _performance_bound_check(cfg: ExperimentConfig, threads: int) -> CheckResult:
    dm = cfg.build_model()
    sim = cfg.sim_config()
    cells = theta_sweep(sim, dm, cfg.theta_grid, methods=("rollout", "periodic"),
                        threads=threads)
    by_key = {(c.theta, c.method): c for c in cells}
    worst_margin = math.inf
    for theta in cfg.theta_grid:
        ro = by_key[(theta, "rollout")]
        pe = by_key[(theta, "periodic")]
        if ro.status != "ok" or pe.status != "ok":
            return CheckResult("performance_bound", False, f"cell failure at theta={theta}")
        holds, margin = check_performance_bound(ro.metrics, pe.metrics, cfg.h)
        worst_margin = min(worst_margin, margin)
        if not holds:
            return CheckResult("performance_bound", False,
                               f"violated at theta={theta} (margin {margin:.4f})")
    return CheckResult("performance_bound", True,
                       f"holds at all {len(cfg.theta_grid)} thetas; worst margin = {worst_margin:.4f}")


def _stability_check(cfg: ExperimentConfig, threads: int) -> CheckResult:
    dm = cfg.build_model()
    sim = cfg.sim_config()
    grid = sorted(cfg.theta_grid)
    probe = sorted({grid[0], grid[len(grid) // 2], grid[-1]})
    window = max(10, cfg.horizon_steps // 12)
    for theta in probe:
        cells = theta_sweep(sim, dm, [theta], methods=("rollout",), threads=threads,
                            keep_traces=True)
        cell = cells[0]
        if cell.status != "ok":
            return CheckResult("mean_square_stability", False, f"cell failure at theta={theta}")
        bounded, report = check_mean_square_stability(cell.info["traces"], window)
        if not bounded:
            return CheckResult(
                "mean_square_stability", False,
                f"growth trend at theta={theta} (slope {report.slope:.3e})",
            )
    return CheckResult("mean_square_stability", True, f"bounded at thetas {probe}")


def _periodic_formula_check(cfg: ExperimentConfig, threads: int) -> CheckResult:
    # Stationary start isolates the long-run average from the initial transient.
    dm = cfg.build_model()
    dm = dm.with_init(np.zeros(dm.n_states), dm.init_cov)
    steady = steady_kalman(dm)
    _, err_cov, _ = steady
    sim = cfg.sim_config(controller_kind="periodic")
    details = []
    for p in cfg.candidates:
        pol = design_periodic(dm, cfg.q_weight, cfg.r_weight, p, alpha=1.0)
        lift = build_lifted(dm, cfg.q_weight, cfg.r_weight, p, alpha=1.0)
        formula = periodic_average_cost(pol, lift, err_cov, theta=0.0)
        traces = [
            simulate_trial(sim, dm, PeriodicController(pol.feedback_gain, p), t, steady=steady)
            for t in range(cfg.trials)
        ]
        metrics = estimate_metrics(traces, theta=0.0)
        gap = abs(metrics.avg_control_cost - formula)
        limit = 3.0 * max(metrics.stderr_control_cost, 1e-12)
        rate_err = abs(metrics.avg_actuation_rate - 1.0 / p)
        if gap > limit or rate_err > 1.0 / cfg.horizon_steps:
            return CheckResult(
                "periodic_formula_vs_sim", False,
                f"p={p}: gap {gap:.4e} vs 3se {limit:.4e}, rate err {rate_err:.2e}",
            )
        details.append(f"p={p}: {gap / max(metrics.stderr_control_cost, 1e-12):.2f}se")
    return CheckResult("periodic_formula_vs_sim", True, "; ".join(details))


def _mpc_kkt_check(cfg: ExperimentConfig) -> CheckResult:
    dm = cfg.build_model()
    theta = cfg.theta_grid[len(cfg.theta_grid) // 2]
    prob = build_mpc_problem(dm, cfg.q_weight, cfg.r_weight, cfg.mpc_horizon, theta)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed_base + 1)))
    worst = 0.0
    for _ in range(20):
        x = rng.standard_normal(dm.n_states) * rng.uniform(0.2, 3.0)
        u_seq, _ = solve_sparse_mpc(prob, x, tol=cfg.mpc_tol, max_iter=cfg.mpc_max_iter)
        worst = max(worst, subgradient_residual(prob, u_seq, x))
    prob0 = build_mpc_problem(dm, cfg.q_weight, cfg.r_weight, cfg.mpc_horizon, 0.0)
    x = rng.standard_normal(dm.n_states)
    u_seq, _ = solve_sparse_mpc(prob0, x, tol=1e-10, max_iter=cfg.mpc_max_iter)
    direct = np.linalg.solve(prob0.quad_matrix, -(prob0.lin_matrix @ x))
    lin_gap = float(np.abs(u_seq.reshape(-1) - direct).max())
    ok = worst <= 1e-6 and lin_gap <= 1e-8
    return CheckResult("mpc_optimality", ok,
                       f"worst KKT residual = {worst:.3e}, theta=0 gap = {lin_gap:.3e}")


def _ordering_check(cfg: ExperimentConfig, threads: int) -> CheckResult:
    if "sparse_mpc" not in cfg.methods:
        return CheckResult("tradeoff_ordering", True, "skipped (sparse_mpc disabled)")
    dm = cfg.build_model()
    theta = cfg.theta_grid[len(cfg.theta_grid) // 2]
    trials = min(cfg.trials, 15)
    sim = replace(cfg.sim_config(), trials=trials)
    cells = theta_sweep(sim, dm, [theta], methods=("rollout", "sparse_mpc"), threads=threads)
    by = {c.method: c for c in cells}
    if any(c.status != "ok" for c in cells):
        return CheckResult("tradeoff_ordering", False, "cell failure")
    ro, mpc = by["rollout"].metrics, by["sparse_mpc"].metrics
    se_cost = 3.0 * math.sqrt(ro.stderr_control_cost**2 + mpc.stderr_control_cost**2)
    se_rate = 3.0 * math.sqrt(ro.stderr_rate**2 + mpc.stderr_rate**2)
    cost_ok = mpc.avg_control_cost <= ro.avg_control_cost + se_cost
    rate_ok = mpc.avg_actuation_rate >= ro.avg_actuation_rate - se_rate
    return CheckResult(
        "tradeoff_ordering", bool(cost_ok and rate_ok),
        f"theta={theta}: mpc cost {mpc.avg_control_cost:.4f} vs rollout "
        f"{ro.avg_control_cost:.4f}; mpc rate {mpc.avg_actuation_rate:.3f} vs "
        f"rollout {ro.avg_actuation_rate:.3f} ({trials} trials)",
    )


def run_verification(cfg: ExperimentConfig, threads: int = 1,
                     corrupt_terminal: bool = False) -> list[CheckResult]:
    """Run the full verification suite; returns one result per check."""
    checks = [
        _scalar_dare_check(),
        _scalar_kalman_check(),
        _discretization_check(cfg),
        _base_cost_identity_check(cfg, corrupt_terminal),
        _oracle_agreement_check(cfg),
        _performance_bound_check(cfg, threads),
        _stability_check(cfg, threads),
        _periodic_formula_check(cfg, threads),
        _mpc_kkt_check(cfg),
        _ordering_check(cfg, threads),
    ]
    return checks
