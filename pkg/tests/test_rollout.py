import math

import numpy as np
import pytest

import sparseroll as sr
from sparseroll.exceptions import HorizonMismatchError, NonFiniteError

PHI = (1.0 + math.sqrt(5.0)) / 2.0


@pytest.fixture(scope="module")
def benchmark_tables(benchmark_model):
    dm = benchmark_model
    _, err_cov, _ = sr.steady_kalman(dm)
    pol = sr.design_periodic(dm, sr.BENCHMARK_Q, sr.BENCHMARK_R, 6, alpha=1.0)
    tables = sr.build_tables(dm, sr.BENCHMARK_Q, sr.BENCHMARK_R, pol.cost_matrix,
                             6, 6, 0.2, 1.0, err_cov)
    return dm, pol, err_cov, tables


def test_enumeration_h2_p2():
    pats = sr.enumerate_patterns(2, 2)
    assert [p.bits for p in pats] == [(1, 0), (0, 0), (0, 1), (1, 1)]
    assert [p.index for p in pats] == [1, 2, 3, 4]
    assert [p.actuation_count for p in pats] == [1, 0, 1, 2]


def test_enumeration_h1_p1():
    pats = sr.enumerate_patterns(1, 1)
    assert [p.bits for p in pats] == [(1,), (0,)]


def test_enumeration_h6_p6():
    pats = sr.enumerate_patterns(6, 6)
    assert len(pats) == 64
    assert pats[0].bits == (1, 0, 0, 0, 0, 0)
    assert len({p.bits for p in pats}) == 64
    assert sorted(p.index for p in pats) == list(range(1, 65))


def test_enumeration_horizon_mismatch():
    with pytest.raises(HorizonMismatchError):
        sr.enumerate_patterns(5, 2)


def test_base_pattern_recovers_terminal(benchmark_tables):
    _, pol, _, tables = benchmark_tables
    resid = (np.linalg.norm(tables.cost_matrices[0, 0] - pol.cost_matrix, "fro")
             / np.linalg.norm(pol.cost_matrix, "fro"))
    assert resid < 1e-8
    assert np.array_equal(tables.cost_matrices[:, 6], np.broadcast_to(pol.cost_matrix, (64, 4, 4)))


def test_scalar_all_ones_single_step_fixed_point(scalar_model):
    # one actuated backward step from the fixed point stays at the fixed point
    terminal = np.array([[PHI]])
    tables = sr.build_tables(scalar_model, [[1.0]], [[1.0]], terminal, 1, 1,
                             theta=0.0, alpha=1.0, err_cov=[[PHI - 1.0]])
    actuated = tables.cost_matrices[0, 0, 0, 0]
    assert abs(actuated - PHI) < 1e-12
    by_hand = 1.0 + PHI - PHI**2 / (PHI + 1.0)
    assert abs(actuated - by_hand) < 1e-12


def test_trigger_score_values(benchmark_model):
    dm = benchmark_model
    _, err_cov, _ = sr.steady_kalman(dm)
    pol = sr.design_periodic(dm, sr.BENCHMARK_Q, sr.BENCHMARK_R, 2, alpha=1.0)
    tables = sr.build_tables(dm, sr.BENCHMARK_Q, sr.BENCHMARK_R, pol.cost_matrix,
                             6, 2, 0.1, 1.0, err_cov)
    for pat, gamma in zip(tables.patterns, tables.trigger_score):
        assert abs(gamma - 0.1 * pat.actuation_count) < 1e-15
    idx = [p.bits for p in tables.patterns].index((1, 0, 1, 0, 1, 0))
    assert abs(tables.trigger_score[idx] - 0.3) < 1e-15


def test_discounted_trigger_score(scalar_model):
    tables = sr.build_tables(scalar_model, [[1.0]], [[1.0]], [[PHI]], 3, 1,
                             theta=0.5, alpha=0.5, err_cov=[[PHI - 1.0]])
    for pat, gamma in zip(tables.patterns, tables.trigger_score):
        expected = 0.5 * sum(0.5**t * b for t, b in enumerate(pat.bits))
        assert abs(gamma - expected) < 1e-15


def test_base_pattern_score_closed_form(benchmark_tables):
    dm, pol, err_cov, tables = benchmark_tables
    h, p, theta = 6, 6, 0.2
    cap_h = h // p
    lift = sr.build_lifted(dm, sr.BENCHMARK_Q, sr.BENCHMARK_R, p)
    beta1_closed = cap_h * (
        float(np.trace(pol.cost_matrix @ lift.d_lift @ lift.proc_cov_lift @ lift.d_lift.T))
        + float(np.trace(pol.gain_quadratic @ err_cov))
        + lift.d_avg
    )
    gamma1_closed = cap_h * theta
    assert abs(tables.noise_score[0] - beta1_closed) < 1e-8 * abs(beta1_closed)
    assert abs(tables.trigger_score[0] - gamma1_closed) < 1e-12

    rng = np.random.default_rng(5)
    for _ in range(10):
        x = rng.standard_normal(4)
        gap = (sr.pattern_score(tables, 1, x, err_cov)
               - float(np.trace(pol.cost_matrix @ err_cov)) - beta1_closed - gamma1_closed)
        assert abs(gap - x @ pol.cost_matrix @ x) < 1e-8 * max(1.0, abs(gap))


def test_score_at_zero_estimate(benchmark_tables):
    _, _, err_cov, tables = benchmark_tables
    for m in (1, 5, 64):
        expected = (float(np.trace(tables.cost_matrices[m - 1, 0] @ err_cov))
                    + tables.noise_score[m - 1] + tables.trigger_score[m - 1])
        assert abs(sr.pattern_score(tables, m, np.zeros(4), err_cov) - expected) < 1e-12


def test_score_even_in_estimate(benchmark_tables, rng):
    _, _, err_cov, tables = benchmark_tables
    for _ in range(20):
        x = rng.standard_normal(4) * rng.uniform(0.1, 3.0)
        s_plus = sr.pattern_scores(tables, x, err_cov)
        s_minus = sr.pattern_scores(tables, -x, err_cov)
        assert np.array_equal(s_plus, s_minus)
        assert sr.select_pattern(tables, x, err_cov) == sr.select_pattern(tables, -x, err_cov)


def test_huge_theta_selects_all_zero(benchmark_model):
    dm = benchmark_model
    _, err_cov, _ = sr.steady_kalman(dm)
    pol = sr.design_periodic(dm, sr.BENCHMARK_Q, sr.BENCHMARK_R, 6, alpha=1.0)
    tables = sr.build_tables(dm, sr.BENCHMARK_Q, sr.BENCHMARK_R, pol.cost_matrix,
                             6, 6, 1e9, 1.0, err_cov)
    m = sr.select_pattern(tables, np.array([1.0, -1.0, 0.3, 0.2]), err_cov)
    assert tables.patterns[m - 1].actuation_count == 0


def test_lookahead_dominance(benchmark_tables, rng):
    _, _, err_cov, tables = benchmark_tables
    for _ in range(50):
        x = rng.standard_normal(4) * rng.uniform(0.05, 3.0)
        scores = sr.pattern_scores(tables, x, err_cov)
        assert scores.min() <= scores[0] + 1e-12


def test_theta_monotone_actuation(benchmark_model, rng):
    dm = benchmark_model
    _, err_cov, _ = sr.steady_kalman(dm)
    pol = sr.design_periodic(dm, sr.BENCHMARK_Q, sr.BENCHMARK_R, 6, alpha=1.0)
    for _ in range(25):
        t1 = rng.uniform(0.01, 0.5)
        t2 = t1 + rng.uniform(0.01, 0.5)
        tab1 = sr.build_tables(dm, sr.BENCHMARK_Q, sr.BENCHMARK_R, pol.cost_matrix,
                               6, 6, t1, 1.0, err_cov)
        tab2 = sr.build_tables(dm, sr.BENCHMARK_Q, sr.BENCHMARK_R, pol.cost_matrix,
                               6, 6, t2, 1.0, err_cov)
        x = rng.standard_normal(4) * rng.uniform(0.05, 2.0)
        m1 = sr.select_pattern(tab1, x, err_cov)
        m2 = sr.select_pattern(tab2, x, err_cov)
        assert (tab2.patterns[m2 - 1].actuation_count
                <= tab1.patterns[m1 - 1].actuation_count)


def test_cost_matrices_symmetric_psd(benchmark_tables):
    _, _, _, tables = benchmark_tables
    pm = tables.cost_matrices
    assert np.abs(pm - np.swapaxes(pm, -1, -2)).max() < 1e-12
    eigs = np.linalg.eigvalsh(pm.reshape(-1, 4, 4))
    assert eigs.min() > -1e-9


def test_alpha_continuity(benchmark_model):
    dm = benchmark_model
    _, err_cov, _ = sr.steady_kalman(dm)
    tabs = {}
    for alpha in (1.0, 1.0 - 1e-8):
        pol = sr.design_periodic(dm, sr.BENCHMARK_Q, sr.BENCHMARK_R, 6, alpha=alpha)
        tabs[alpha] = sr.build_tables(dm, sr.BENCHMARK_Q, sr.BENCHMARK_R, pol.cost_matrix,
                                      6, 6, 0.2, alpha, err_cov)
    a, b = tabs[1.0], tabs[1.0 - 1e-8]
    rel = (np.abs(a.cost_matrices - b.cost_matrices).max()
           / max(1.0, np.abs(a.cost_matrices).max()))
    assert rel < 1e-5
    assert np.abs(a.noise_score - b.noise_score).max() < 1e-5 * max(1.0, np.abs(a.noise_score).max())


def test_gain_quadratics_zero_on_idle_steps(benchmark_tables):
    _, _, _, tables = benchmark_tables
    for mi, pat in enumerate(tables.patterns):
        for s, bit in enumerate(pat.bits):
            if not bit:
                assert np.all(tables.gains[mi, s] == 0.0)
                assert np.all(tables.gain_quadratics[mi, s] == 0.0)


def test_transient_covariance_stack_support(benchmark_model):
    dm = benchmark_model
    _, err_cov, _ = sr.steady_kalman(dm)
    pol = sr.design_periodic(dm, sr.BENCHMARK_Q, sr.BENCHMARK_R, 2, alpha=1.0)
    stack = np.broadcast_to(err_cov, (4, 4, 4)).copy()
    tables_stack = sr.build_tables(dm, sr.BENCHMARK_Q, sr.BENCHMARK_R, pol.cost_matrix,
                                   4, 2, 0.1, 1.0, stack)
    tables_flat = sr.build_tables(dm, sr.BENCHMARK_Q, sr.BENCHMARK_R, pol.cost_matrix,
                                  4, 2, 0.1, 1.0, err_cov)
    assert np.allclose(tables_stack.noise_score, tables_flat.noise_score)


def test_nonfinite_recursion_detected():
    dm = sr.DiscreteModel(a=[[1e80]], b=[[1.0]], c=[[1.0]], proc_cov=[[1.0]],
                          meas_cov=[[1.0]], init_mean=[0.0], init_cov=[[1.0]])
    with pytest.raises(NonFiniteError):
        sr.build_tables(dm, [[1.0]], [[1.0]], [[1.0]], 4, 2, 0.1, 1.0, [[1.0]])


def test_policy_requires_divisible_horizon(benchmark_tables):
    _, _, _, tables = benchmark_tables
    with pytest.raises(HorizonMismatchError):
        sr.RolloutPolicy(tables=tables, period=4, theta=0.2)


def test_free_actuation_reduces_to_lqg(scalar_model):
    # h = p = 1 with theta = 0: actuating always wins since the actuated
    # cost-to-go is dominated by the idle one and the penalty is free
    dm = scalar_model
    _, err_cov, _ = sr.steady_kalman(dm)
    pol = sr.design_periodic(dm, [[1.0]], [[1.0]], 1, alpha=1.0)
    tables = sr.build_tables(dm, [[1.0]], [[1.0]], pol.cost_matrix, 1, 1,
                             theta=0.0, alpha=1.0, err_cov=err_cov)
    p_act = tables.cost_matrices[0, 0, 0, 0]
    p_idle = tables.cost_matrices[1, 0, 0, 0]
    assert p_act < p_idle  # scalar Riccati gap is positive
    for x in np.linspace(-3.0, 3.0, 25):
        if abs(x) < 1e-2:
            continue  # the gap vanishes exactly at the origin
        assert sr.select_pattern(tables, np.array([x]), err_cov) == 1
    # and the applied gain is the standard LQG feedback
    assert abs(tables.gains[0, 0, 0, 0] - pol.feedback_gain[0, 0]) < 1e-10
