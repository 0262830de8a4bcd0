import numpy as np
import pytest

from opaug import (
    IncidenceStructure,
    LaplacianStructure,
    MatrixFamily,
    build_grid_1d,
    make_discrete,
)


@pytest.fixture
def scalar_structure():
    """Single edge, one Dirichlet endpoint: A = [w] for weight w."""
    inc = IncidenceStructure(2, np.array([[0, 1]]), np.array([1]))
    return LaplacianStructure(inc, gamma=0.0)


@pytest.fixture
def scalar_two_point(scalar_structure):
    """The A_hat in {0.5, 1.5} equal-mass ensemble at truth A = 1."""
    family = MatrixFamily.two_point(scalar_structure, 0.5, 1.5)
    ensemble = make_discrete(family, np.ones(1))
    truth = scalar_structure.assemble(np.ones(1))
    return family, ensemble, truth


@pytest.fixture
def path3_instance():
    return build_grid_1d(3)


def enumerate_mean(ensemble, func):
    """Probability-weighted mean of func over the ensemble's dense outcomes."""
    return sum(
        p * func(op.dense())
        for p, op in zip(ensemble.probabilities, ensemble.operators)
    )
