"""Rollout-based sparse intermittent actuation for stochastic linear systems.

Designs optimal periodic base policies, runs receding-horizon lookahead
co-design of actuation timing and feedback, simulates the closed loop under
process/measurement noise, and benchmarks the control-cost versus
actuation-rate trade-off against periodic control and a group-sparse MPC
relaxation.
"""

from .benchmark import (
    BENCHMARK_H,
    BENCHMARK_HORIZON_STEPS,
    BENCHMARK_PERIOD_CANDIDATES,
    BENCHMARK_Q,
    BENCHMARK_R,
    BENCHMARK_THETA_GRID,
    BENCHMARK_TRIALS,
    BENCHMARK_TS,
    BENCHMARK_X0_MEAN,
    benchmark_discrete_model,
)
from .estimator import EstimatorState, kalman_init, kalman_step, steady_kalman
from .exceptions import (
    AssumptionViolatedError,
    ConfigError,
    HorizonMismatchError,
    IllConditionedError,
    NonConvergenceError,
    NonFiniteError,
    SparseRollError,
)
from .oracle import OracleResult, closed_loop_matrices, oracle_select
from .periodic import (
    PeriodicPolicy,
    best_periodic,
    design_periodic,
    periodic_average_cost,
    periodic_discounted_cost,
)
from .plant import (
    ContinuousModel,
    DiscreteModel,
    LiftedSystem,
    build_benchmark_model,
    build_lifted,
    discretize,
)
from .riccati import (
    RiccatiProblem,
    RiccatiSolution,
    check_controllability,
    check_lifted_observability,
    check_observability,
    check_pathological_sampling,
    riccati_residual,
    solve_dare,
)
from .rollout import (
    RolloutPolicy,
    RolloutTables,
    TriggerPattern,
    build_tables,
    enumerate_patterns,
    pattern_score,
    pattern_scores,
    rollout_block,
    select_pattern,
)
from .simulate import (
    Metrics,
    SimConfig,
    SimTrace,
    StabilityReport,
    SweepCell,
    check_mean_square_stability,
    check_performance_bound,
    estimate_metrics,
    noise_streams,
    simulate_trial,
    theta_sweep,
)
from .sparse_mpc import (
    AdmmState,
    MpcProblem,
    block_soft_threshold,
    build_mpc_problem,
    mpc_controller_step,
    solve_sparse_mpc,
    subgradient_residual,
)

__version__ = "0.1.0"
