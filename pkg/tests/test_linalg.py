"""Hermitian kernel: Gram, spectrum, semidefinite Cholesky."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ncsimo.linalg import (
    CholeskyError,
    cholesky_psd,
    frobenius_norm,
    gram_normalized,
    hermitize,
    max_eigenvalue,
    shifted_matrix,
    slightly_above,
)
from ncsimo.oracles import expected_gram



def random_psd(rng, t, rank=None):
    rank = t if rank is None else rank
    b = rng.standard_normal((rank, t)) + 1j * rng.standard_normal((rank, t))
    return b.conj().T @ b


def naive_gram(x):
    n, t = x.shape
    g = np.zeros((t, t), dtype=complex)
    for i in range(t):
        for j in range(t):
            g[i, j] = sum(np.conj(x[k, i]) * x[k, j] for k in range(n)) / n
    return g


class TestGram:
    def test_zero(self):
        np.testing.assert_array_equal(gram_normalized(np.zeros((4, 3))), np.zeros((3, 3)))

    def test_noiseless_rank_one(self, rng, qpsk):
        n, t = 16, 5
        h = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        h *= np.sqrt(n) / np.linalg.norm(h)
        s = qpsk.points[rng.integers(0, 4, t)]
        g = gram_normalized(np.outer(h, s.conj()))
        np.testing.assert_allclose(g, np.outer(s, s.conj()), atol=1e-12)

    def test_matches_double_loop(self, rng):
        x = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
        np.testing.assert_allclose(gram_normalized(x, 3), naive_gram(x), atol=1e-12)

    def test_hermitian_with_real_diagonal(self, rng):
        x = rng.standard_normal((7, 4)) + 1j * rng.standard_normal((7, 4))
        g = gram_normalized(x)
        np.testing.assert_array_equal(g, g.conj().T)
        assert np.all(g.diagonal().imag == 0)

    def test_dimension_errors(self):
        with pytest.raises(ValueError):
            gram_normalized(np.zeros((3, 2)), 4)
        with pytest.raises(ValueError):
            gram_normalized(np.zeros(3))


class TestMaxEigenvalue:
    @pytest.mark.parametrize("t", [1, 3, 8])
    def test_identity(self, t):
        assert max_eigenvalue(np.eye(t)) == pytest.approx(1.0, rel=1e-12)

    @pytest.mark.parametrize("sigma_sq", [0.0, 0.5, 2.0])
    def test_expected_gram_unit_modulus(self, qpsk, rng, sigma_sq):
        t = 9
        s = qpsk.points[rng.integers(0, 4, t)]
        assert max_eigenvalue(expected_gram(s, sigma_sq)) == pytest.approx(t + sigma_sq, rel=1e-10)

    def test_rank_one(self, qam16, rng):
        s = qam16.points[rng.integers(0, 16, 6)]
        t = float(np.sum(np.abs(s) ** 2))
        assert max_eigenvalue(np.outer(s, s.conj())) == pytest.approx(t, rel=1e-10)

    @given(seed=st.integers(0, 2**32 - 1), t=st.integers(1, 8))
    def test_rayleigh_lower_bound(self, seed, t):
        r = np.random.default_rng(seed)
        h = hermitize(random_psd(r, t) - 2.0 * np.eye(t))
        v = r.standard_normal(t) + 1j * r.standard_normal(t)
        q = np.vdot(v, h @ v).real / np.vdot(v, v).real
        assert max_eigenvalue(h) >= q - 1e-10 * (1 + abs(q))


class TestShifted:
    def test_identity(self):
        np.testing.assert_array_equal(shifted_matrix(np.eye(3), 2.0), np.eye(3))

    def test_expected_gram_diagonal(self, qpsk, rng):
        t, sigma_sq = 5, 0.3
        s = qpsk.points[rng.integers(0, 4, t)]
        a = shifted_matrix(expected_gram(s, sigma_sq), t + sigma_sq)
        np.testing.assert_allclose(a.diagonal().real, t - np.abs(s) ** 2, atol=1e-12)

    def test_rho_at_lambda_max_is_singular(self, rng):
        h = hermitize(random_psd(rng, 4))
        w = np.linalg.eigvalsh(shifted_matrix(h, max_eigenvalue(h)))
        assert abs(w.min()) < 1e-10 * np.abs(w).max()


class TestCholesky:
    def test_identity(self):
        np.testing.assert_array_equal(cholesky_psd(np.eye(4)), np.eye(4))

    def test_closed_form_t4(self, qpsk, rng):
        s = qpsk.points[rng.integers(0, 4, 4)]
        a = 4 * np.eye(4) - np.outer(s, s.conj())
        r = cholesky_psd(a)
        expected = [np.sqrt(3), np.sqrt(8 / 3), np.sqrt(2), 0.0]
        np.testing.assert_allclose(r.diagonal().real, expected, atol=1e-12)

    def test_random_psd_reconstruction(self, rng):
        m = random_psd(rng, 4)
        r = cholesky_psd(m)
        assert frobenius_norm(r.conj().T @ r - m) <= 1e-10

    @given(seed=st.integers(0, 2**32 - 1), t=st.integers(1, 10), rank=st.integers(1, 10))
    def test_reconstruction_property(self, seed, t, rank):
        r_ = np.random.default_rng(seed)
        m = random_psd(r_, t, min(rank, t))
        r, delta = cholesky_psd(m, return_shift=True)
        assert np.allclose(np.tril(r, -1), 0)
        assert np.all(r.diagonal().real >= 0) and np.all(r.diagonal().imag == 0)
        err = frobenius_norm(r.conj().T @ r - (m + delta * np.eye(t)))
        assert err <= 1e-9 * (1 + frobenius_norm(m))

    @given(seed=st.integers(0, 2**32 - 1), t=st.integers(2, 12))
    def test_slightly_above_needs_no_shift(self, seed, t):
        r_ = np.random.default_rng(seed)
        h = hermitize(random_psd(r_, t, r_.integers(1, t + 1)))
        _, delta = cholesky_psd(shifted_matrix(h, slightly_above(max_eigenvalue(h))), return_shift=True)
        assert delta == 0.0

    def test_small_negative_eigenvalue_absorbed_by_jitter(self):
        m = np.diag([1.0, 1.0, -1e-9])
        r, delta = cholesky_psd(m, jitter=1e-10, return_shift=True)
        assert delta >= 1e-9
        np.testing.assert_allclose(r.conj().T @ r, m + delta * np.eye(3), atol=1e-15)

    def test_indefinite_raises(self):
        with pytest.raises(CholeskyError):
            cholesky_psd(np.diag([1.0, -1.0]))

    def test_zero_pivot_row_left_zero(self):
        # second pivot is exactly zero: its row stays zero
        m = np.array([[1, 1, 0], [1, 1, 0], [0, 0, 2]], dtype=complex)
        r = cholesky_psd(m)
        np.testing.assert_array_equal(r[1], 0)
        np.testing.assert_allclose(r.conj().T @ r, m, atol=1e-12)


class TestFrobenius:
    def test_values(self):
        assert frobenius_norm(np.zeros((3, 3))) == 0.0
        assert frobenius_norm(np.eye(5)) == pytest.approx(np.sqrt(5))
        assert frobenius_norm(np.array([[3, 4j]])) == pytest.approx(5.0)


def test_rho_margin():
    assert slightly_above(10.0) == pytest.approx(10.0 * (1 + 1e-9) + 1e-12, rel=1e-15)
    assert slightly_above(0.0) > 0.0
