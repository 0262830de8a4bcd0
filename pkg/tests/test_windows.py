import numpy as np
import pytest

from opaug import (
    HARD,
    SOFT,
    SpdOperator,
    factorize,
    series_terms,
    series_terms_batch,
    shifted,
    window,
    window_denom,
    window_weights,
)
from opaug.errors import DimensionMismatch, InvalidOrder, InvalidShift


class TestWindowValues:
    def test_soft_n1(self):
        # truncation-series display: w = k below 2N, (k-1)/2 at 2N, 0 after
        assert window(SOFT, 1, 0) == 0.0
        assert window(SOFT, 1, 1) == 1.0
        assert window(SOFT, 1, 2) == 0.5
        assert window(SOFT, 1, 3) == 0.0
        assert window_denom(SOFT, 1, 2) == 1.0

    def test_hard_n1(self):
        assert window(HARD, 1, 2) == 2.0
        assert window_denom(HARD, 1, 2) == 3.0
        assert window(HARD, 1, 3) == 0.0

    def test_shifted_alpha_one_is_hard_on_support(self):
        for n in (1, 2, 5):
            w, wbar = window_weights(shifted(1.0), n)
            np.testing.assert_array_equal(w, np.arange(n + 1))
            np.testing.assert_array_equal(wbar, np.arange(n + 1) + 1)

    def test_shifted_alpha2_n2_value(self):
        # (k+1) - sum_{j=k}^{N} eta^{j-k} at eta = 0.5: w(0) = 1 - 1.75
        assert window(shifted(2.0), 2, 0) == pytest.approx(-0.75, abs=1e-15)

    def test_invalid_order(self):
        with pytest.raises(InvalidOrder):
            window(SOFT, 0, 1)
        with pytest.raises(InvalidOrder):
            window(SOFT, 1, -1)

    def test_invalid_shift(self):
        with pytest.raises(InvalidShift):
            shifted(0.5)


class TestWindowConsistency:
    def test_numerator_below_denominator(self):
        for kind in (SOFT, HARD):
            for n in range(1, 9):
                w, wbar = window_weights(kind, n)
                assert np.all(w <= wbar)

    def test_soft_converges_pointwise(self):
        for k in range(0, 12):
            assert window(SOFT, 20, k) == float(k)
            assert window_denom(SOFT, 20, k) == float(k + 1)

    def test_shifted_denominator_is_k_plus_one(self):
        for alpha in (1.0, 1.5, 3.0):
            _, wbar = window_weights(shifted(alpha), 6)
            np.testing.assert_array_equal(wbar, np.arange(7) + 1.0)

    def test_shifted_numerator_limit(self):
        # w_N(k) -> k + 1 - alpha as N grows
        alpha = 1.5
        w, _ = window_weights(shifted(alpha), 200)
        for k in range(5):
            assert w[k] == pytest.approx(k + 1 - alpha, abs=1e-12)


class TestSeriesTerms:
    def test_sample_equals_base(self):
        op = SpdOperator(np.diag([2.0, 3.0]))
        fact = factorize(op)
        q = np.array([1.0, 1.0])
        t = series_terms(fact, op, q, 4)
        assert t[0] == pytest.approx(q @ fact.solve(q))
        np.testing.assert_allclose(t[1:], 0.0, atol=1e-14)

    def test_scalar_geometric_below(self):
        base = factorize(SpdOperator(np.array([[1.0]])))
        sample = SpdOperator(np.array([[0.5]]))
        t = series_terms(base, sample, np.array([1.0]), 5)
        np.testing.assert_allclose(t, 0.5 ** np.arange(6), atol=1e-14)

    def test_scalar_alternating_above(self):
        base = factorize(SpdOperator(np.array([[1.0]])))
        sample = SpdOperator(np.array([[1.5]]))
        t = series_terms(base, sample, np.array([1.0]), 5)
        np.testing.assert_allclose(t, (-0.5) ** np.arange(6), atol=1e-14)

    def test_shifted_scalar(self):
        base = factorize(SpdOperator(np.array([[1.0]])))
        sample = SpdOperator(np.array([[1.5]]))
        t = series_terms(base, sample, np.array([1.0]), 4, alpha=1.5)
        np.testing.assert_allclose(t, [1.0, 0.0, 0.0, 0.0, 0.0], atol=1e-14)

    def test_alpha_below_one_rejected(self):
        base = factorize(SpdOperator(np.eye(1)))
        with pytest.raises(InvalidShift):
            series_terms(base, SpdOperator(np.eye(1)), np.ones(1), 2, alpha=0.5)

    def test_dimension_mismatch(self):
        base = factorize(SpdOperator(np.eye(2)))
        with pytest.raises(DimensionMismatch):
            series_terms(base, SpdOperator(np.eye(3)), np.ones(2), 2)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        n, m = 5, 4
        base_mat = np.diag(rng.uniform(1.0, 2.0, size=n))
        base = factorize(SpdOperator(base_mat))
        mats = []
        for _ in range(m):
            d = rng.standard_normal((n, n)) * 0.1
            mats.append(base_mat + (d + d.T) / 2.0)
        probes = rng.standard_normal((n, m))
        alphas = rng.uniform(1.0, 2.0, size=m)

        def apply_all(v):
            return np.column_stack([mats[i] @ v[:, i] for i in range(m)])

        batch = series_terms_batch(base, apply_all, probes, 6, alphas)
        for i in range(m):
            single = series_terms(base, SpdOperator(mats[i]), probes[:, i], 6, alphas[i])
            np.testing.assert_allclose(batch[i], single, rtol=1e-12)

    def test_partial_sums_telescope_to_sample_inverse(self):
        # Neumann telescoping: sum_k t_k -> q^T A_s^{-1} q when ||X|| < 1
        rng = np.random.default_rng(1)
        for _ in range(10):
            n = int(rng.integers(2, 7))
            q_mat, _ = np.linalg.qr(rng.standard_normal((n, n)))
            base_mat = (q_mat * rng.uniform(0.5, 2.0, size=n)) @ q_mat.T
            base_mat = (base_mat + base_mat.T) / 2.0
            d = rng.standard_normal((n, n))
            d = (d + d.T) / 2.0
            d *= 0.9 / np.max(np.abs(np.linalg.eigvalsh(d)))
            half = np.linalg.cholesky(base_mat)
            sample_mat = half @ (np.eye(n) - d) @ half.T
            sample_mat = (sample_mat + sample_mat.T) / 2.0
            q = rng.standard_normal(n)
            t = series_terms(factorize(SpdOperator(base_mat)), SpdOperator(sample_mat), q, 200)
            expected = q @ np.linalg.solve(sample_mat, q)
            assert abs(t.sum() - expected) <= 1e-8 * max(1.0, abs(expected))
