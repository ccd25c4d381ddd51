import math

import numpy as np
import pytest

import sparseroll as sr

PHI = (1.0 + math.sqrt(5.0)) / 2.0


@pytest.fixture(scope="session")
def benchmark_model():
    return sr.benchmark_discrete_model()


@pytest.fixture(scope="session")
def stationary_benchmark(benchmark_model):
    # Zero initial mean: the closed loop starts in its stationary regime.
    return benchmark_model.with_init(np.zeros(4), benchmark_model.init_cov)


@pytest.fixture(scope="session")
def benchmark_steady(benchmark_model):
    return sr.steady_kalman(benchmark_model)


@pytest.fixture(scope="session")
def scalar_model():
    # Integrator with unit noise; init_cov is the predictive fixed point phi.
    return sr.DiscreteModel(
        a=[[1.0]], b=[[1.0]], c=[[1.0]],
        proc_cov=[[1.0]], meas_cov=[[1.0]],
        init_mean=[0.0], init_cov=[[PHI]],
    )


@pytest.fixture()
def rng():
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(20240601)))
