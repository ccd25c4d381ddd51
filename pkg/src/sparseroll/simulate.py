"""Closed-loop Monte Carlo simulation and trade-off estimation.

The per-step order follows the information structure of the problem:
measure, update the estimate, decide (u, delta), pay the stage cost, then
evolve the plant.  Noise is drawn from counter-based generators keyed on
(seed_base, trial), so results are reproducible regardless of how trials
are scheduled, and all methods compared at the same trial index consume
identical noise (common random numbers).
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimator import kalman_init, kalman_step, steady_kalman
from .exceptions import NonFiniteError
from .periodic import best_periodic, design_periodic
from .plant import DiscreteModel
from .rollout import RolloutPolicy, StepRecord, build_tables, rollout_block
from .sparse_mpc import AdmmState, build_mpc_problem, mpc_controller_step

METHODS = ("rollout", "periodic", "sparse_mpc")


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce one experiment cell or sweep."""

    horizon_steps: int
    trials: int
    seed_base: int
    q_weight: np.ndarray
    r_weight: np.ndarray
    controller_kind: str = "rollout"
    theta: float = 0.1
    h: int = 6
    p: int = 6
    alpha: float = 1.0
    candidates: tuple[int, ...] = (1, 2, 3, 6)
    mpc_horizon: int = 30
    mpc_penalty: float = 1.0
    mpc_tol: float = 1e-8
    mpc_max_iter: int = 10_000

    def __post_init__(self):
        if self.horizon_steps < 1 or self.trials < 1:
            raise ValueError("horizon_steps and trials must be >= 1")
        if self.controller_kind not in METHODS:
            raise ValueError(f"unknown controller kind {self.controller_kind!r}")
        if self.controller_kind == "rollout":
            if self.h % self.p != 0:
                raise ValueError("rollout requires h to be a multiple of p")
            if self.horizon_steps % self.h != 0:
                raise ValueError("rollout requires horizon_steps to be a multiple of h")
        object.__setattr__(self, "q_weight", np.atleast_2d(np.asarray(self.q_weight, dtype=float)))
        object.__setattr__(self, "r_weight", np.atleast_2d(np.asarray(self.r_weight, dtype=float)))
        object.__setattr__(self, "candidates", tuple(int(c) for c in self.candidates))


@dataclass(frozen=True)
class SimTrace:
    """Per-step closed-loop records of one trial."""

    states: np.ndarray
    estimates: np.ndarray
    inputs: np.ndarray
    triggers: np.ndarray
    outputs: np.ndarray
    stage_costs: np.ndarray

    @property
    def control_cost(self) -> float:
        return float(self.stage_costs.mean())

    @property
    def actuation_rate(self) -> float:
        return float(self.triggers.mean())


@dataclass(frozen=True)
class Metrics:
    """Across-trial averages of control cost and actuation rate."""

    avg_control_cost: float
    avg_actuation_rate: float
    total: float
    stderr_control_cost: float
    stderr_rate: float
    theta: float
    per_trial_cost: np.ndarray
    per_trial_rate: np.ndarray

    @property
    def trials(self) -> int:
        return len(self.per_trial_cost)


def _cov_factor(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        return v * np.sqrt(np.clip(w, 0.0, None))


def noise_streams(dm: DiscreteModel, seed_base: int, trial: int, n_steps: int):
    """Deterministic (x0, process, measurement) noise for one trial.

    A counter-based Philox generator keyed on (seed_base, trial) draws the
    initial state, then all process noises, then all measurement noises, so
    the realization depends only on the key, never on scheduling.
    """
    seq = np.random.SeedSequence(entropy=[int(seed_base) & (2**64 - 1), int(trial)])
    gen = np.random.Generator(np.random.Philox(seq))
    lx = _cov_factor(dm.init_cov)
    lw = _cov_factor(dm.proc_cov)
    lv = _cov_factor(dm.meas_cov)
    x0 = dm.init_mean + lx @ gen.standard_normal(dm.n_states)
    w_seq = gen.standard_normal((n_steps, dm.n_states)) @ lw.T
    v_seq = gen.standard_normal((n_steps + 1, dm.n_outputs)) @ lv.T
    return x0, w_seq, v_seq


class PlantSim:
    """True plant stepped against recorded noise sequences."""

    def __init__(self, dm: DiscreteModel, q_weight, r_weight, x0, w_seq, v_seq):
        self.model = dm
        self._q = np.atleast_2d(np.asarray(q_weight, dtype=float))
        self._r = np.atleast_2d(np.asarray(r_weight, dtype=float))
        self._x = np.asarray(x0, dtype=float).copy()
        self._w = w_seq
        self._v = v_seq
        self._k = 0
        self._y = dm.c @ self._x + v_seq[0]

    @property
    def state(self) -> np.ndarray:
        return self._x

    @property
    def output(self) -> np.ndarray:
        return self._y

    def stage_cost(self, x, u) -> float:
        return float(x @ self._q @ x + u @ self._r @ u)

    def step(self, u) -> np.ndarray:
        dm = self.model
        k = self._k
        x_next = dm.a @ self._x + dm.b @ np.asarray(u, dtype=float) + self._w[k]
        if not np.isfinite(x_next).all():
            raise NonFiniteError(f"state became non-finite at step {k + 1}")
        self._x = x_next
        self._y = dm.c @ x_next + self._v[k + 1]
        self._k = k + 1
        return self._y


class PeriodicController:
    """Apply the periodic gain at multiples of the period, zero otherwise."""

    def __init__(self, gain: np.ndarray, period: int):
        self.gain = gain
        self.period = period
        self._zero = np.zeros(gain.shape[0])

    def decide(self, est, k: int):
        if k % self.period == 0:
            return self.gain @ est.estimate, 1
        return self._zero, 0


class SparseMpcController:
    """Warm-started receding-horizon sparse MPC."""

    def __init__(self, problem, dm: DiscreteModel, tol: float = 1e-8, max_iter: int = 10_000):
        self.problem = problem
        self.dm = dm
        self.tol = tol
        self.max_iter = max_iter
        dim = problem.quad_matrix.shape[0]
        self._warm = AdmmState(
            primal=np.zeros(dim), auxiliary=np.zeros(dim), dual=np.zeros(dim), penalty=1.0,
        )

    def decide(self, est, k: int):
        u, delta, self._warm = mpc_controller_step(
            est, self.problem, self.dm, state=self._warm, tol=self.tol, max_iter=self.max_iter,
        )
        return u, delta


def _trace_from_records(records: list[StepRecord]) -> SimTrace:
    return SimTrace(
        states=np.array([r.state for r in records]),
        estimates=np.array([r.estimate for r in records]),
        inputs=np.array([r.input for r in records]),
        triggers=np.array([r.trigger for r in records], dtype=np.int8),
        outputs=np.array([r.output for r in records]),
        stage_costs=np.array([r.stage_cost for r in records]),
    )


def simulate_trial(cfg: SimConfig, dm: DiscreteModel, controller, seed: int,
                   steady=None, noise=None) -> SimTrace:
    """Run one closed-loop trial with the given controller.

    ``controller`` is either a :class:`RolloutPolicy` (block execution) or
    any object with ``decide(est, k) -> (u, delta)``.  ``seed`` is the trial
    key combined with ``cfg.seed_base`` for the noise draw; ``noise`` may
    inject an explicit (x0, w_seq, v_seq) realization instead.
    """
    n_steps = cfg.horizon_steps
    if noise is None:
        x0, w_seq, v_seq = noise_streams(dm, cfg.seed_base, seed, n_steps)
    else:
        x0, w_seq, v_seq = noise
    plant = PlantSim(dm, cfg.q_weight, cfg.r_weight, x0, w_seq, v_seq)
    if steady is None:
        steady = steady_kalman(dm)
    est = kalman_init(dm, plant.output, steady=steady)

    records: list[StepRecord] = []
    if isinstance(controller, RolloutPolicy):
        h = controller.tables.horizon
        if n_steps % h != 0:
            raise ValueError("horizon_steps must be a multiple of the block length")
        pol = controller
        for _ in range(n_steps // h):
            block_records, pol, est = rollout_block(pol, est, plant, h)
            records.extend(block_records)
    else:
        for k in range(n_steps):
            u, delta = controller.decide(est, k)
            u = np.asarray(u, dtype=float).reshape(-1)
            x = plant.state
            records.append(
                StepRecord(x, est.estimate, u, int(delta), plant.output, plant.stage_cost(x, u))
            )
            y_next = plant.step(u)
            est = kalman_step(est, u, y_next, dm)
    return _trace_from_records(records)


def estimate_metrics(traces, theta: float) -> Metrics:
    """Across-trial means and standard errors of cost and actuation rate."""
    traces = list(traces)
    if not traces:
        raise ValueError("need at least one trace")
    costs = np.array([t.control_cost for t in traces])
    rates = np.array([t.actuation_rate for t in traces])
    n = len(traces)
    se_c = float(costs.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    se_r = float(rates.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    avg_c = float(costs.mean())
    avg_r = float(rates.mean())
    return Metrics(
        avg_control_cost=avg_c,
        avg_actuation_rate=avg_r,
        total=avg_c + theta * avg_r,
        stderr_control_cost=se_c,
        stderr_rate=se_r,
        theta=theta,
        per_trial_cost=costs,
        per_trial_rate=rates,
    )


def make_controller_factory(method: str, cfg: SimConfig, dm: DiscreteModel, theta: float,
                            steady=None):
    """Design the controller for one (method, theta) cell.

    Returns (factory, info) where factory() yields a fresh per-trial
    controller and info carries design byproducts (chosen period, tables).
    """
    if steady is None:
        steady = steady_kalman(dm)
    _, err_cov, _ = steady
    q_w, r_w = cfg.q_weight, cfg.r_weight
    if method == "rollout":
        base = design_periodic(dm, q_w, r_w, cfg.p, alpha=cfg.alpha)
        tables = build_tables(dm, q_w, r_w, base.cost_matrix, cfg.h, cfg.p,
                              theta, cfg.alpha, err_cov)
        info = {"tables": tables, "base_policy": base, "p": cfg.p, "h": cfg.h}
        return (lambda: RolloutPolicy(tables=tables, period=cfg.p, theta=theta)), info
    if method == "periodic":
        p_star, formula_cost = best_periodic(dm, q_w, r_w, cfg.candidates, err_cov, theta)
        pol = design_periodic(dm, q_w, r_w, p_star, alpha=1.0)
        info = {"p": p_star, "formula_cost": formula_cost, "policy": pol}
        return (lambda: PeriodicController(pol.feedback_gain, p_star)), info
    if method == "sparse_mpc":
        problem = build_mpc_problem(dm, q_w, r_w, cfg.mpc_horizon, theta)
        info = {"problem": problem}
        return (
            lambda: SparseMpcController(problem, dm, tol=cfg.mpc_tol, max_iter=cfg.mpc_max_iter)
        ), info
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class SweepCell:
    """One (theta, method) aggregate of a sweep; metrics None on failure."""

    theta: float
    method: str
    metrics: Metrics | None
    status: str = "ok"
    info: dict = field(default_factory=dict, repr=False)


def theta_sweep(cfg: SimConfig, dm: DiscreteModel, theta_grid, methods=METHODS,
                threads: int = 1, keep_traces: bool = False):
    """Run every enabled method over the theta grid with common random numbers.

    Per-cell failures are recorded in the returned cells' status and the
    sweep continues.  Aggregation order is fixed by trial index, so results
    do not depend on the thread count.
    """
    cells: list[SweepCell] = []
    steady = steady_kalman(dm)
    for theta in theta_grid:
        for method in methods:
            try:
                factory, info = make_controller_factory(method, cfg, dm, theta, steady=steady)

                def one_trial(trial, factory=factory):
                    return simulate_trial(cfg, dm, factory(), trial, steady=steady)

                if threads > 1:
                    with ThreadPoolExecutor(max_workers=threads) as pool:
                        traces = list(pool.map(one_trial, range(cfg.trials)))
                else:
                    traces = [one_trial(t) for t in range(cfg.trials)]
                metrics = estimate_metrics(traces, theta)
                if keep_traces:
                    info = dict(info)
                    info["traces"] = traces
                cells.append(SweepCell(theta=float(theta), method=method, metrics=metrics,
                                       status="ok", info=info))
            except Exception as exc:  # noqa: BLE001 - cell isolation is the contract
                cells.append(SweepCell(theta=float(theta), method=method, metrics=None,
                                       status=f"error: {exc}"))
    return cells


def check_performance_bound(metrics_rollout: Metrics, metrics_periodic: Metrics, h: int):
    """Empirical lookahead performance bound versus the base periodic policy.

    Holds iff total(rollout) <= total(periodic) + 1/h + 3 pooled standard
    errors of the per-trial totals.  Returns (holds, margin).
    """
    theta = metrics_rollout.theta
    tot_ro = metrics_rollout.per_trial_cost + theta * metrics_rollout.per_trial_rate
    tot_pe = metrics_periodic.per_trial_cost + theta * metrics_periodic.per_trial_rate
    se_ro = tot_ro.std(ddof=1) / math.sqrt(len(tot_ro)) if len(tot_ro) > 1 else 0.0
    se_pe = tot_pe.std(ddof=1) / math.sqrt(len(tot_pe)) if len(tot_pe) > 1 else 0.0
    pooled = math.sqrt(se_ro**2 + se_pe**2)
    bound = metrics_periodic.total + 1.0 / h + 3.0 * pooled
    margin = bound - metrics_rollout.total
    return margin >= 0.0, float(margin)


@dataclass(frozen=True)
class StabilityReport:
    window_means: np.ndarray
    slope: float
    slope_stderr: float
    last_window_ratio: float
    bounded: bool


def check_mean_square_stability(traces, window_len: int):
    """Windowed trend test of E||x_k||^2 across trials.

    Bounded iff the last-window mean stays within 1.5x the maximum of the
    middle windows and the fitted slope over windows is not significantly
    positive (slope <= 3 sigma).  Returns (bounded, report).
    """
    traces = list(traces)
    n_steps = traces[0].states.shape[0]
    if n_steps < 4 * window_len:
        raise ValueError("need at least four windows")
    sq = np.mean([np.sum(t.states**2, axis=1) for t in traces], axis=0)
    n_windows = n_steps // window_len
    means = sq[: n_windows * window_len].reshape(n_windows, window_len).mean(axis=1)

    middle = means[1:-1]
    denom = max(float(middle.max()), 1e-300)
    last_ratio = float(means[-1]) / denom
    last_ok = means[-1] <= 1.5 * middle.max()

    idx = np.arange(n_windows, dtype=float)
    x_c = idx - idx.mean()
    sxx = float(x_c @ x_c)
    slope = float(x_c @ means) / sxx
    resid = means - means.mean() - slope * x_c
    dof = max(n_windows - 2, 1)
    slope_se = math.sqrt(max(float(resid @ resid), 0.0) / dof / sxx)
    slope_ok = slope <= 3.0 * slope_se

    bounded = bool(last_ok and slope_ok)
    report = StabilityReport(
        window_means=means,
        slope=slope,
        slope_stderr=slope_se,
        last_window_ratio=last_ratio,
        bounded=bounded,
    )
    return bounded, report
