import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arclsr1 import memory, oracles
from arclsr1.checks import _indefinite_sym, _sr1_buffer
from arclsr1.errors import InvalidArgument, SingularMemory

e = np.eye(4)


def single_pair_buffer():
    buf = memory.PairBuffer(3)
    buf.append(e[0], 3 * e[0])
    return buf


# pair acceptance -------------------------------------------------------------

def test_try_add_pair_accepts_on_empty_history():
    buf = memory.PairBuffer(3)
    assert memory.try_add_pair(buf, e[0], 2 * e[0], lambda v: 1.0 * v)
    assert len(buf) == 1


def test_try_add_pair_rejects_orthogonal_residual():
    buf = memory.PairBuffer(3)
    # y - B s = e2 with B = I
    assert not memory.try_add_pair(buf, e[0], e[0] + e[1], e[0])
    assert len(buf) == 0


def test_try_add_pair_rejects_exact_secant():
    buf = memory.PairBuffer(3)
    assert not memory.try_add_pair(buf, e[0], e[0], lambda v: v)
    assert len(buf) == 0


def test_try_add_pair_rejects_nonfinite():
    with pytest.raises(InvalidArgument):
        memory.try_add_pair(memory.PairBuffer(2), e[0], np.full(4, np.nan), e[0])


def test_buffer_evicts_oldest():
    buf = memory.PairBuffer(2)
    for i in range(3):
        buf.append(e[i], (i + 2) * e[i])
    np.testing.assert_array_equal(buf.S, e[:, 1:3])
    np.testing.assert_array_equal(buf.Y, e[:, 1:3] * [3, 4])
    with pytest.raises(InvalidArgument):
        buf.append(np.ones(3), np.ones(3))
    with pytest.raises(InvalidArgument):
        memory.PairBuffer(0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 12))
def test_buffer_size_never_exceeds_capacity(cap, pushes):
    buf = memory.PairBuffer(cap)
    rng = np.random.default_rng(pushes)
    for _ in range(pushes):
        buf.append(rng.standard_normal(3), rng.standard_normal(3))
        assert len(buf) <= cap
    assert len(buf) == min(cap, pushes)


# spectral shift -------------------------------------------------------------

def test_spectral_shift_orthonormal_steps():
    buf = memory.PairBuffer(2)
    buf.append(e[0], 3 * e[0])
    buf.append(e[1], 5 * e[1])
    assert memory.spectral_shift(buf) == (3.0, False)
    assert memory.spectral_shift(buf, scale=0.9)[0] == pytest.approx(2.7)


def test_spectral_shift_clamps_negative():
    buf = memory.PairBuffer(1)
    buf.append(e[0], -2 * e[0])
    assert memory.spectral_shift(buf, bounds=(1e-8, 1e8)) == (1e-8, False)
    buf = memory.PairBuffer(1)
    buf.append(e[0], 1e9 * e[0])
    assert memory.spectral_shift(buf)[0] == 1e8


def test_spectral_shift_matches_whitening_oracle():
    rng = np.random.default_rng(20)
    buf = memory.PairBuffer(3)
    for _ in range(3):
        buf.append(rng.standard_normal(10), rng.standard_normal(10))
    S, Y = buf.S, buf.Y
    lam = oracles.whitened_gen_eig(S.T @ Y, S.T @ S)
    expected = float(np.clip(lam[0], 1e-8, 1e8))
    assert memory.spectral_shift(buf)[0] == pytest.approx(expected, rel=1e-10)


def test_spectral_shift_fallback_on_dependent_steps():
    buf = memory.PairBuffer(2)
    buf.append(e[0], 2 * e[0])
    buf.append(2 * e[0], 3 * e[0])
    assert memory.spectral_shift(buf, previous=0.7) == (0.7, True)
    assert memory.spectral_shift(buf) == (1e-8, True)
    with pytest.raises(InvalidArgument):
        memory.spectral_shift(memory.PairBuffer(2))


# compact form and spectral factors ------------------------------------------

def test_single_pair_compact_example():
    c = memory.build_compact(single_pair_buffer(), 1.0)
    np.testing.assert_array_equal(c.Psi[:, 0], 2 * e[0])
    np.testing.assert_array_equal(c.Mmat, [[2.0]])
    B = memory.dense_b(c)
    np.testing.assert_allclose(B, np.eye(4) + 2 * np.outer(e[0], e[0]))
    np.testing.assert_allclose(memory.apply_b(c, e[0]), 3 * e[0])
    eig = memory.partial_eig(c)
    np.testing.assert_allclose(eig.lam_hat, [2.0])
    np.testing.assert_allclose(np.abs(eig.Upar[:, 0]), e[0], atol=1e-15)


def test_build_compact_errors():
    with pytest.raises(InvalidArgument):
        memory.build_compact(memory.PairBuffer(2), 1.0)
    with pytest.raises(InvalidArgument):
        memory.build_compact(single_pair_buffer(), 0.0)
    buf = memory.PairBuffer(2)
    buf.append(e[0], 2 * e[0])
    buf.append(e[0], 2 * e[0])  # duplicate pair: Mmat is singular
    with pytest.raises(SingularMemory):
        memory.build_compact(buf, 1.0)


def test_partial_eig_orthonormal_psi_identity_m():
    # Y = 2 S with S orthonormal and delta 1 gives Psi = S and Mmat = I.
    buf = memory.PairBuffer(2)
    buf.append(e[0], 2 * e[0])
    buf.append(e[1], 2 * e[1])
    eig = memory.partial_eig(memory.build_compact(buf, 1.0))
    np.testing.assert_allclose(eig.lam_hat, [1.0, 1.0])


def test_identity_factors_and_dense_guard():
    eig = memory.identity_factors(5, 2.0)
    np.testing.assert_array_equal(eig.apply(np.ones(5)), 2 * np.ones(5))
    np.testing.assert_array_equal(memory.dense_b(eig), 2 * np.eye(5))
    with pytest.raises(InvalidArgument):
        memory.dense_b(memory.identity_factors(65))


def test_compact_matches_recursive_random_instance():
    rng = np.random.default_rng(21)
    buf, _ = _sr1_buffer(6, 3, rng, 0.8)
    assert len(buf) == 3
    c = memory.build_compact(buf, 0.8)
    ref = oracles.recursive_sr1(buf.S, buf.Y, 0.8)
    B = memory.dense_b(c)
    assert np.linalg.norm(B - ref) / max(1.0, np.linalg.norm(ref)) < 1e-9
    np.testing.assert_allclose(c.Mmat, c.Mmat.T, rtol=1e-10, atol=1e-12)
    for _ in range(100):
        v = rng.standard_normal(6)
        np.testing.assert_allclose(memory.apply_b(c, v), ref @ v, rtol=1e-9, atol=1e-9)


def test_secant_holds_for_newest_pair():
    rng = np.random.default_rng(22)
    buf, _ = _sr1_buffer(7, 4, rng, 1.3)
    c = memory.build_compact(buf, 1.3)
    s, y = buf.S[:, -1], buf.Y[:, -1]
    np.testing.assert_allclose(memory.apply_b(c, s), y, rtol=1e-9, atol=1e-9)


def test_indefinite_curvature_is_representable():
    buf = memory.PairBuffer(1)
    buf.append(e[0], -3 * e[0])
    eig = memory.partial_eig(memory.build_compact(buf, 1.0))
    assert eig.eigenvalues().min() < 0
    np.testing.assert_allclose(eig.apply(e[0]), -3 * e[0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_factors_reproduce_compact_product(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 10))
    m = int(rng.integers(1, min(5, n) + 1))
    delta = float(rng.uniform(0.2, 2.0))
    buf, _ = _sr1_buffer(n, m, rng, delta)
    c = memory.build_compact(buf, delta)
    eig = memory.partial_eig(c)
    assert np.linalg.norm(eig.Upar.T @ eig.Upar - np.eye(eig.k)) <= 1e-10
    assert np.all(np.diff(eig.lam_hat) >= 0)
    v = rng.standard_normal(n)
    ref = memory.apply_b(c, v)
    assert np.linalg.norm(eig.apply(v) - ref) <= 1e-8 * max(1.0, np.linalg.norm(ref))


def test_build_factors_drops_excess_and_singular_pairs():
    buf = memory.PairBuffer(5)
    buf.append(e[0], 2 * e[0])
    buf.append(e[0], 2 * e[0])
    eig, fell_back = memory.build_factors(buf, 4, scale=0.9)
    assert fell_back
    assert len(buf) == 1 and eig.k == 1
    empty, _ = memory.build_factors(memory.PairBuffer(3), 4, initial_delta=1.0)
    assert empty.k == 0 and empty.delta == 1.0


def test_hessian_recovery_on_quadratic():
    rng = np.random.default_rng(23)
    A = _indefinite_sym(5, rng)
    buf, _ = _sr1_buffer(5, 5, rng, 1.0, A=A)
    assert len(buf) == 5
    B = oracles.recursive_sr1(buf.S, buf.Y, 1.0)
    assert np.linalg.norm(B - A) / np.linalg.norm(A) < 1e-6
    B = memory.dense_b(memory.build_compact(buf, 1.0))
    assert np.linalg.norm(B - A) / np.linalg.norm(A) < 1e-6


def test_build_factors_unscaled_shift_on_one_pair_is_singular():
    # delta equal to the pair's own curvature leaves Mmat = 0; history is cleared
    buf = single_pair_buffer()
    eig, _ = memory.build_factors(buf, 4, initial_delta=1.0)
    assert len(buf) == 0 and eig.k == 0
