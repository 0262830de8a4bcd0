import numpy as np
import pytest

from opaug import (
    DiscreteEnsemble,
    MatrixFamily,
    NoiseModel,
    SpdOperator,
    build_grid_1d,
    factorize,
    make_discrete,
    shifted_instance,
)
from opaug.errors import StructureMismatch, TooLarge, UnsupportedModel

from conftest import enumerate_mean


class TestSampling:
    def test_degenerate_two_point_reproduces_truth(self, path3_instance):
        family = MatrixFamily.two_point(path3_instance.structure, 1.0, 1.0)
        rng = np.random.default_rng(0)
        for _ in range(5):
            omega_hat, op = family.sample(path3_instance.weights, rng)
            np.testing.assert_array_equal(omega_hat, path3_instance.weights)
            np.testing.assert_allclose(op.dense(), path3_instance.operator.dense())

    def test_two_point_support_and_mean(self, path3_instance):
        family = MatrixFamily.two_point(path3_instance.structure, 0.5, 1.5)
        rng = np.random.default_rng(1)
        draws = family.draw_multipliers(rng, (4, 100_000))
        assert set(np.unique(draws)) == {0.5, 1.5}
        assert 0.99 <= draws.mean() <= 1.01

    def test_bernoulli_support_and_zero_frequency(self, path3_instance):
        family = MatrixFamily.bernoulli(path3_instance.structure, 0.75)
        rng = np.random.default_rng(2)
        draws = family.draw_multipliers(rng, (4, 100_000))
        assert set(np.unique(draws)) == {0.0, 4.0 / 3.0}
        zero_freq = np.mean(draws == 0.0)
        assert abs(zero_freq - 0.25) <= 0.01

    def test_gamma_bootstrap_mean(self, path3_instance):
        family = MatrixFamily.gamma(path3_instance.structure, 1.0, 0.45)
        rng = np.random.default_rng(3)
        omega_hat = np.array([1.5, 0.5, 2.0, 1.0])
        weights = family.bootstrap_weights(omega_hat, rng, 100_000)
        np.testing.assert_allclose(weights.mean(axis=1), omega_hat, rtol=0.01)

    def test_bootstrap_composes_multiplicatively(self, scalar_structure):
        family = MatrixFamily.two_point(scalar_structure, 0.5, 1.5)
        rng = np.random.default_rng(4)
        values = {
            float(family.bootstrap_sample(np.array([1.5]), rng).dense()[0, 0])
            for _ in range(200)
        }
        assert values == {0.75, 2.25}

    def test_structure_mismatch(self, path3_instance):
        family = MatrixFamily.two_point(path3_instance.structure, 0.5, 1.5)
        with pytest.raises(StructureMismatch):
            family.sample(np.ones(3), np.random.default_rng(0))


class TestMakeDiscrete:
    def test_single_edge_two_point(self, scalar_two_point):
        _, ensemble, _ = scalar_two_point
        assert len(ensemble) == 2
        np.testing.assert_allclose(ensemble.probabilities, [0.5, 0.5])

    def test_two_edges_four_outcomes(self):
        inst = build_grid_1d(1)
        family = MatrixFamily.two_point(inst.structure, 0.5, 1.5)
        ensemble = make_discrete(family, inst.weights)
        assert len(ensemble) == 4
        np.testing.assert_allclose(ensemble.probabilities, 0.25)

    def test_bernoulli_product_probabilities(self, path3_instance):
        structure = shifted_instance(path3_instance.incidence, path3_instance.weights, 1.0).structure
        family = MatrixFamily.bernoulli(structure, 0.75)
        ensemble = make_discrete(family, path3_instance.weights)
        assert len(ensemble) == 16
        zero_counts = (ensemble.weights == 0).sum(axis=1)
        expected = 0.75 ** (4 - zero_counts) * 0.25**zero_counts
        np.testing.assert_allclose(ensemble.probabilities, expected)

    def test_gamma_unsupported(self, path3_instance):
        family = MatrixFamily.gamma(path3_instance.structure, 1.0, 0.45)
        with pytest.raises(UnsupportedModel):
            make_discrete(family, path3_instance.weights)

    def test_too_large(self):
        inst = build_grid_1d(20)  # 21 edges -> 2^21 outcomes
        family = MatrixFamily.two_point(inst.structure, 0.5, 1.5)
        with pytest.raises(TooLarge):
            make_discrete(family, inst.weights)

    def test_bad_probabilities_rejected(self):
        op = SpdOperator(np.eye(1))
        with pytest.raises(ValueError):
            DiscreteEnsemble(np.array([0.7, 0.7]), [op, op])


class TestDistributionInvariants:
    def test_unbiasedness_exact_discrete(self, path3_instance):
        truth = path3_instance.operator.dense()
        for build in (
            lambda s: MatrixFamily.two_point(s, 0.5, 1.5),
            lambda s: MatrixFamily.bernoulli(s, 0.75),
        ):
            family = build(path3_instance.structure)
            ensemble = make_discrete(family, path3_instance.weights)
            np.testing.assert_allclose(ensemble.mean(), truth, atol=1e-13)

    def test_unbiasedness_gamma_empirical(self, path3_instance):
        family = MatrixFamily.gamma(path3_instance.structure, 1.0, 0.45)
        rng = np.random.default_rng(5)
        weights = family.bootstrap_weights(path3_instance.weights, rng, 1_000_000)
        mean_op = path3_instance.structure.assemble(weights.mean(axis=1)).dense()
        truth = path3_instance.operator.dense()
        rel = np.linalg.norm(mean_op - truth) / np.linalg.norm(truth)
        assert rel <= 1e-3

    def test_almost_sure_spd_dirichlet(self):
        inst = build_grid_1d(6)
        rng = np.random.default_rng(6)
        for build in (
            lambda s: MatrixFamily.two_point(s, 0.5, 1.5),
            lambda s: MatrixFamily.gamma(s, 1.0, 0.45),
        ):
            family = build(inst.structure)
            weights = family.bootstrap_weights(inst.weights, rng, 10_000)
            for i in range(weights.shape[1]):
                factorize(inst.structure.assemble(weights[:, i]))

    def test_almost_sure_spd_bernoulli_with_shift(self, path3_instance):
        inst = shifted_instance(path3_instance.incidence, path3_instance.weights, 1.0)
        family = MatrixFamily.bernoulli(inst.structure, 0.5)
        rng = np.random.default_rng(7)
        weights = family.bootstrap_weights(inst.weights, rng, 10_000)
        for i in range(weights.shape[1]):
            factorize(inst.structure.assemble(weights[:, i]))

    def test_bootstrap_matches_discrete_law(self):
        inst = build_grid_1d(1)
        family = MatrixFamily.two_point(inst.structure, 0.5, 1.5)
        ensemble = make_discrete(family, inst.weights)
        rng = np.random.default_rng(8)
        draws = family.bootstrap_weights(inst.weights, rng, 40_000)
        counts = np.zeros(len(ensemble))
        for j, outcome in enumerate(ensemble.weights):
            counts[j] = np.mean(np.all(draws.T == outcome, axis=1))
        np.testing.assert_allclose(counts, ensemble.probabilities, atol=0.01)

    def test_enumerated_inverse_mean_matches_known_value(self, scalar_two_point):
        _, ensemble, _ = scalar_two_point
        mean_inv = enumerate_mean(ensemble, lambda m: 1.0 / m[0, 0])
        assert abs(mean_inv - 4.0 / 3.0) < 1e-14
