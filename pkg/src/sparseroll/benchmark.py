"""Assembled two-mass-spring benchmark with its experiment constants.

Key constants when reading results: the cost weights below, sampling
period 0.1, lookahead horizon 6 with periodic candidates {1, 2, 3, 6},
a horizon of 600 steps and 50 Monte Carlo trials.  The initial covariance
is set to the predictive filter fixed point, so the Kalman filter is
stationary from the first step.
"""

import numpy as np

from .estimator import steady_kalman
from .plant import DiscreteModel, build_benchmark_model, discretize

BENCHMARK_TS = 0.1

BENCHMARK_Q = np.array([
    [0.1336, -0.0936, -0.0327, 0.0347],
    [-0.0936, 0.1336, 0.0347, -0.0327],
    [-0.0327, 0.0347, 0.0377, 0.0024],
    [0.0347, -0.0327, 0.0024, 0.0377],
])

BENCHMARK_R = np.array([[0.1]])

BENCHMARK_X0_MEAN = np.array([1.0, -1.0, 0.0, 0.0])

BENCHMARK_THETA_GRID = tuple(round(0.02 * k, 2) for k in range(1, 21))

BENCHMARK_H = 6
BENCHMARK_PERIOD_CANDIDATES = (1, 2, 3, 6)
BENCHMARK_HORIZON_STEPS = 600
BENCHMARK_TRIALS = 50
BENCHMARK_MPC_HORIZON = 30


def benchmark_discrete_model(ts: float = BENCHMARK_TS, init_mean=None) -> DiscreteModel:
    """Discretized benchmark with a stationary-filter initial covariance.

    ``init_mean`` overrides the default initial state mean; passing zeros
    gives a stationary-start model useful for formula-versus-simulation
    comparisons free of the initial transient.
    """
    dm = discretize(build_benchmark_model(), ts)
    _, _, prior_cov = steady_kalman(dm)
    mean = BENCHMARK_X0_MEAN if init_mean is None else np.asarray(init_mean, dtype=float)
    return dm.with_init(mean, prior_cov)
