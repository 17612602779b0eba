import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from arclsr1 import memory, oracles, subproblem
from arclsr1.errors import InvalidArgument

# (gbar, lam, mu) -> (minimizer, value); values frozen from oracles.scalar_grid_min
SCALAR_CASES = [
    ((0.0, 2.0, 1.0), 0.0, 0.0),
    ((-3.0, 0.0, 3.0), 1.0, -2.0),
    ((1.0, -2.0, 1.0), -2.414213562373095, -3.552284749830794),
    ((0.0, -2.0, 1.0), 2.0, -4.0 / 3.0),
]


@pytest.mark.parametrize("args, s_ref, v_ref", SCALAR_CASES)
def test_scalar_cubic_min_examples(args, s_ref, v_ref):
    s = subproblem.scalar_cubic_min(*args)
    assert s == pytest.approx(s_ref, abs=1e-14)
    assert subproblem.scalar_model(*args, s) == pytest.approx(v_ref, abs=1e-14)
    _, grid = oracles.scalar_grid_min(*args)
    assert subproblem.scalar_model(*args, s) <= grid + 1e-12


def test_scalar_tie_break_is_positive():
    s = subproblem.scalar_cubic_min(0.0, -2.0, 1.0)
    assert s > 0
    assert subproblem.scalar_model(0.0, -2.0, 1.0, s) == subproblem.scalar_model(0.0, -2.0, 1.0, -s)


@pytest.mark.parametrize("mu", [0.0, -1.0, math.inf, math.nan])
def test_scalar_rejects_bad_mu(mu):
    with pytest.raises(InvalidArgument):
        subproblem.scalar_cubic_min(1.0, 1.0, mu)
    with pytest.raises(InvalidArgument):
        subproblem.solve_perp(1.0, 1.0, mu)


@settings(max_examples=200, deadline=None)
@given(st.floats(-100, 100), st.floats(-50, 50), st.floats(1e-3, 1e3))
def test_scalar_stationarity_and_global_optimality(gbar, lam, mu):
    s = subproblem.scalar_cubic_min(gbar, lam, mu)
    scale = abs(gbar) + abs(lam * s) + mu * s * s + 1e-300
    assert abs(gbar + lam * s + mu * s * abs(s)) <= 1e-10 * scale
    # second-order condition of the global minimizer of the cubic
    assert lam + 2 * mu * abs(s) >= -1e-9 * (abs(lam) + 1)
    assert subproblem.scalar_model(gbar, lam, mu, s) <= subproblem.scalar_model(gbar, lam, mu, -s) + 1e-9 * scale * (abs(s) + 1)


def test_solve_parallel_examples():
    assert np.all(subproblem.solve_parallel(np.zeros(3), np.ones(3), 2.0) == 0)
    # mixed mu per coordinate: evaluated one coordinate at a time
    s1 = subproblem.solve_parallel([-3.0], [0.0], 3.0)
    s2 = subproblem.solve_parallel([1.0], [-2.0], 1.0)
    np.testing.assert_allclose([s1[0], s2[0]], [1.0, -1 - math.sqrt(2)], rtol=1e-15)
    with pytest.raises(InvalidArgument):
        subproblem.solve_parallel([1.0, 2.0], [1.0], 1.0)


def test_solve_parallel_matches_grid_oracle():
    rng = np.random.default_rng(30)
    gbar, lam, mu = rng.standard_normal(5), rng.uniform(-3, 3, 5), 0.7
    s = subproblem.solve_parallel(gbar, lam, mu)
    for j in range(5):
        s_ref, _ = oracles.scalar_grid_min(gbar[j], lam[j], mu)
        assert s[j] == pytest.approx(s_ref, abs=1e-8)


def test_solve_perp_examples():
    assert subproblem.solve_perp(0.0, 1.0, 1.0) == 1.0
    alpha = subproblem.solve_perp(2.0, 1.0, 1.0)
    assert alpha == 0.5
    t = alpha * 2.0
    assert -2 + t + t * t == 0  # derivative of -2t + t^2/2 + t^3/3
    # vanishing regularization tends to the quadratic-model step 1/delta
    assert subproblem.solve_perp(2.0, 1.0, 1e-12) == pytest.approx(1.0, abs=1e-11)
    with pytest.raises(InvalidArgument):
        subproblem.solve_perp(1.0, 0.0, 1.0)


def test_solve_zero_gradient():
    eig = memory.identity_factors(4)
    sol = subproblem.solve(np.zeros(4), eig, 1.0)
    assert np.all(sol.step == 0) and sol.model_value == 0 and sol.pred_reduction == 0


def test_solve_empty_history_is_scaled_gradient():
    g = np.array([3.0, 4.0])
    sol = subproblem.solve(g, memory.identity_factors(2, 1.0), 1.0)
    alpha = 2 / (1 + math.sqrt(1 + 4 * 5.0))
    np.testing.assert_allclose(sol.step, -alpha * g)
    assert sol.g_perp_norm == 5.0 and sol.sbar_par.size == 0


def _random_factors(rng, n, k):
    U, _ = np.linalg.qr(rng.standard_normal((n, k)))
    return memory.LsrEigFactors(float(rng.uniform(0.1, 3)), U, np.sort(rng.uniform(-4, 4, k)))


def test_solve_matches_dense_oracle_n5_k2():
    rng = np.random.default_rng(31)
    eig = _random_factors(rng, 5, 2)
    g = rng.standard_normal(5)
    sol = subproblem.solve(g, eig, 0.8)
    B = memory.dense_b(eig)
    s_ref, v_ref = oracles.dense_cubic_solution(g, B, eig.delta, 0.8)
    np.testing.assert_allclose(sol.step, s_ref, atol=1e-7)
    assert sol.model_value == pytest.approx(v_ref, abs=1e-8)
    V, lam = oracles.aligned_eigenbasis(B, g, eig.delta)
    s_dense = V @ subproblem.solve_dense(V.T @ g, lam, 0.8)
    np.testing.assert_allclose(sol.step, s_dense, atol=1e-7)


def test_raw_parallel_curvature_switch():
    rng = np.random.default_rng(32)
    eig = _random_factors(rng, 6, 2)
    g = rng.standard_normal(6)
    raw = subproblem.solve(g, eig, 1.0, "raw")
    expected = subproblem.solve_parallel(eig.Upar.T @ g, eig.lam_hat, 1.0)
    np.testing.assert_allclose(raw.sbar_par, expected)
    with pytest.raises(InvalidArgument):
        subproblem.solve(g, eig, 1.0, "other")
    with pytest.raises(InvalidArgument):
        subproblem.solve(np.ones(5), eig, 1.0)


def test_solve_dense_guard_and_zero():
    assert np.all(subproblem.solve_dense(np.zeros(3), [1.0, -1.0, 2.0], 1.0) >= 0)
    with pytest.raises(InvalidArgument):
        subproblem.solve_dense(np.ones(65), np.ones(65), 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.floats(1e-3, 1e2), st.floats(1.01, 100))
def test_solve_invariants(seed, mu, ratio):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 12))
    k = int(rng.integers(0, n))
    eig = _random_factors(rng, n, k) if k else memory.identity_factors(n, float(rng.uniform(0.1, 3)))
    g = rng.standard_normal(n)
    assume(np.linalg.norm(g) > 1e-6)
    sol = subproblem.solve(g, eig, mu)
    # descent certificate
    assert sol.pred_reduction > 0
    # orthogonal split of the step
    split = sol.sbar_par @ sol.sbar_par + (sol.alpha_star * sol.g_perp_norm) ** 2
    assert sol.step @ sol.step == pytest.approx(split, rel=1e-8, abs=1e-14)
    # larger regularization never lengthens the step
    tighter = subproblem.solve(g, eig, mu * ratio)
    assert np.linalg.norm(tighter.step) <= np.linalg.norm(sol.step) * (1 + 1e-12)
