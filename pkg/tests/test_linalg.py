import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from opaug import (
    ProbeCorrelation,
    SpdOperator,
    factorize,
    generalized_spectral_norm,
    sample_probe,
)
from opaug.errors import DimensionMismatch, NotPositiveDefinite
from opaug.linalg import generalized_spectral_norm_batch


TRIDIAG3 = np.array([[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]])


class TestFactorize:
    def test_identity(self):
        fact = factorize(SpdOperator(np.eye(3)))
        np.testing.assert_allclose(fact.solve(np.array([1.0, 0.0, 0.0])), [1.0, 0.0, 0.0])

    def test_diagonal(self):
        fact = factorize(SpdOperator(np.diag([4.0, 9.0])))
        np.testing.assert_allclose(fact.solve(np.array([4.0, 9.0])), [1.0, 1.0])

    def test_tridiagonal_against_elimination_oracle(self):
        # frozen from dense Gaussian elimination on tridiag(-1, 2, -1)
        fact = factorize(SpdOperator(TRIDIAG3))
        np.testing.assert_allclose(fact.solve(np.array([1.0, 0.0, 0.0])), [0.75, 0.5, 0.25])
        np.testing.assert_allclose(fact.solve(np.array([1.0, 1.0, 1.0])), [1.5, 2.0, 1.5])
        np.testing.assert_allclose(
            fact.solve(np.eye(3)), np.linalg.solve(TRIDIAG3, np.eye(3)), atol=1e-14
        )

    def test_sparse_matches_dense(self):
        rng = np.random.default_rng(0)
        b = rng.standard_normal(3)
        dense = factorize(SpdOperator(TRIDIAG3)).solve(b)
        sparse = factorize(SpdOperator(sp.csr_array(TRIDIAG3))).solve(b)
        np.testing.assert_allclose(sparse, dense, atol=1e-12)

    def test_not_positive_definite_dense(self):
        with pytest.raises(NotPositiveDefinite):
            factorize(SpdOperator(np.array([[1.0, 2.0], [2.0, 1.0]])))

    def test_not_positive_definite_sparse(self):
        with pytest.raises(NotPositiveDefinite):
            factorize(SpdOperator(sp.csr_array(np.array([[1.0, 2.0], [2.0, 1.0]]))))

    def test_singular_sparse(self):
        lap = np.array([[1.0, -1.0], [-1.0, 1.0]])
        with pytest.raises(NotPositiveDefinite):
            factorize(SpdOperator(sp.csr_array(lap)))

    def test_asymmetric_rejected(self):
        with pytest.raises(DimensionMismatch):
            SpdOperator(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_rhs_dimension_mismatch(self):
        fact = factorize(SpdOperator(np.eye(3)))
        with pytest.raises(DimensionMismatch):
            fact.solve(np.ones(4))

    def test_residual_on_random_well_conditioned(self):
        # invariant: ||A x - b|| <= 1e-8 ||b|| on 100 instances, n in 2..64
        rng = np.random.default_rng(42)
        for trial in range(100):
            n = int(rng.integers(2, 65))
            q, _ = np.linalg.qr(rng.standard_normal((n, n)))
            vals = rng.uniform(1.0, 1e4, size=n) / 1e2
            a = (q * vals) @ q.T
            a = (a + a.T) / 2.0
            op = SpdOperator(sp.csr_array(a)) if trial % 3 == 0 else SpdOperator(a)
            b = rng.standard_normal(n)
            x = factorize(op).solve(b)
            assert np.linalg.norm(a @ x - b) <= 1e-8 * np.linalg.norm(b)


class TestProbeCorrelation:
    def test_zero_matrix_gives_zero_probe(self):
        corr = ProbeCorrelation(np.zeros((3, 3)))
        rng = np.random.default_rng(0)
        for _ in range(10):
            np.testing.assert_array_equal(sample_probe(corr, rng), np.zeros(3))

    def test_identity_empirical_covariance(self):
        corr = ProbeCorrelation.identity(3)
        rng = np.random.default_rng(7)
        q = corr.sample_block(rng, 100_000)
        cov = q @ q.T / q.shape[1]
        assert np.max(np.abs(cov - np.eye(3))) < 0.05

    def test_scaled_variance(self):
        corr = ProbeCorrelation(np.array([[4.0]]))
        rng = np.random.default_rng(11)
        q = corr.sample_block(rng, 100_000)
        assert 3.8 <= np.var(q) <= 4.2

    def test_factor_reproduces_matrix(self):
        rng = np.random.default_rng(3)
        for n, rank in [(4, 4), (5, 3), (6, 1)]:
            m = rng.standard_normal((n, rank))
            lam = m @ m.T
            corr = ProbeCorrelation(lam)
            resid = np.linalg.norm(corr.factor @ corr.factor.T - lam)
            assert resid <= 1e-10 * max(np.linalg.norm(lam), 1.0)

    def test_indefinite_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            ProbeCorrelation(np.array([[1.0, 0.0], [0.0, -1.0]]))

    def test_seed_determinism_bit_for_bit(self):
        corr = ProbeCorrelation(np.array([[2.0, 1.0], [1.0, 2.0]]))
        a = sample_probe(corr, np.random.default_rng(123))
        b = sample_probe(corr, np.random.default_rng(123))
        assert a.tobytes() == b.tobytes()


class TestGeneralizedSpectralNorm:
    def test_equal_pair_is_one(self):
        op = SpdOperator(TRIDIAG3)
        result = generalized_spectral_norm(op, factorize(op), rng=np.random.default_rng(0))
        assert result.converged
        assert abs(result.value - 1.0) <= 1e-6

    def test_diagonal_spectrum(self):
        num = SpdOperator(np.diag([2.0, 0.5]))
        den = factorize(SpdOperator(np.eye(2)))
        result = generalized_spectral_norm(num, den, rng=np.random.default_rng(1))
        assert abs(result.value - 2.0) <= 1e-6

    def test_random_pair_matches_dense_eigensolver(self):
        rng = np.random.default_rng(5)
        q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        num = SpdOperator((q * [3.0, 1.5, 1.0, 0.7, 0.2]) @ q.T)
        q2, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        den_mat = (q2 * [1.0, 1.2, 0.8, 1.5, 0.9]) @ q2.T
        expected = np.max(sla.eigvalsh(num.dense(), den_mat))
        result = generalized_spectral_norm(num, factorize(SpdOperator(den_mat)), rng=rng)
        assert abs(result.value - expected) <= 1e-6 * expected

    def test_suite_matches_oracle_to_1e5(self):
        # deliberate spectral gap so 200 iterations always suffice
        rng = np.random.default_rng(9)
        for _ in range(20):
            n = int(rng.integers(2, 17))
            q, _ = np.linalg.qr(rng.standard_normal((n, n)))
            vals = np.sort(rng.uniform(0.5, 1.5, size=n))
            if n > 1:
                vals[-1] = vals[-2] * 1.3 + 0.1
            num = SpdOperator((q * vals) @ q.T)
            den_mat = np.eye(n)
            expected = np.max(sla.eigvalsh(num.dense(), den_mat))
            result = generalized_spectral_norm(num, factorize(SpdOperator(den_mat)), rng=rng)
            assert abs(result.value - expected) <= 1e-5 * expected

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            generalized_spectral_norm(
                SpdOperator(np.eye(3)), factorize(SpdOperator(np.eye(2))),
                rng=np.random.default_rng(0),
            )

    def test_batch_matches_single(self):
        rng = np.random.default_rng(17)
        n, m = 6, 5
        den_op = SpdOperator(np.diag(rng.uniform(0.5, 2.0, size=n)))
        den = factorize(den_op)
        mats = []
        for _ in range(m):
            q, _ = np.linalg.qr(rng.standard_normal((n, n)))
            vals = np.sort(rng.uniform(0.5, 1.5, size=n))
            vals[-1] = vals[-2] * 1.4 + 0.1
            a = (q * vals) @ q.T
            mats.append((a + a.T) / 2.0)
        starts = rng.standard_normal((n, m))

        def apply_all(v):
            return np.column_stack([mats[i] @ v[:, i] for i in range(m)])

        values, converged = generalized_spectral_norm_batch(apply_all, den, starts)
        assert converged.all()
        for i in range(m):
            expected = np.max(sla.eigvalsh(mats[i], den_op.dense()))
            assert abs(values[i] - expected) <= 1e-4 * expected
