"""Conditional matrix distributions: multiplicative edge-weight noise models,
bootstrap re-sampling at observed parameters, and exact discretization of
finite-outcome families.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import StructureMismatch, TooLarge, UnsupportedModel
from .linalg import SpdOperator

MAX_DISCRETE_OUTCOMES = 2**20


class NoiseModel(enum.Enum):
    TWO_POINT = "two-point"
    GAMMA = "gamma"
    BERNOULLI_KEEP = "bernoulli"


@dataclass(frozen=True)
class MatrixFamily:
    """A conditional distribution over SPD operators.

    Given per-edge weights omega, samples (omega_hat, M(omega_hat)) where
    omega_hat_e = z_e * omega_e with z_e i.i.d. multiplicative noise.  All
    three models have E[z] = 1, so E[A_hat] = A (unbiased).

    The `structure` handle maps a weight vector to the SPD operator; see
    problems.LaplacianStructure.
    """

    model: NoiseModel
    structure: object
    low: float = 0.0   # TWO_POINT
    high: float = 0.0  # TWO_POINT
    mu: float = 0.0    # GAMMA
    sigma: float = 0.0  # GAMMA
    keep: float = 0.0  # BERNOULLI_KEEP

    @classmethod
    def two_point(cls, structure, low=0.5, high=1.5):
        if not (0.0 <= low <= high):
            raise ValueError(f"two-point multipliers must satisfy 0 <= low <= high, got {low}, {high}")
        return cls(NoiseModel.TWO_POINT, structure, low=low, high=high)

    @classmethod
    def gamma(cls, structure, mu=1.0, sigma=0.45):
        if mu <= 0 or sigma <= 0:
            raise ValueError(f"gamma noise requires mu > 0 and sigma > 0, got {mu}, {sigma}")
        return cls(NoiseModel.GAMMA, structure, mu=mu, sigma=sigma)

    @classmethod
    def bernoulli(cls, structure, keep=0.75):
        if not (0.0 < keep <= 1.0):
            raise ValueError(f"keep probability must lie in (0, 1], got {keep}")
        return cls(NoiseModel.BERNOULLI_KEEP, structure, keep=keep)

    @property
    def edge_count(self) -> int:
        return self.structure.edge_count

    def _check(self, omega: np.ndarray) -> np.ndarray:
        omega = np.asarray(omega, dtype=np.float64)
        if omega.shape != (self.edge_count,):
            raise StructureMismatch(
                f"parameter vector has length {omega.shape}, structure has {self.edge_count} edges"
            )
        return omega

    def draw_multipliers(self, rng: np.random.Generator, shape) -> np.ndarray:
        """Draw i.i.d. mean-one multipliers z with the model's law."""
        if self.model is NoiseModel.TWO_POINT:
            return np.where(rng.random(shape) < 0.5, self.low, self.high)
        if self.model is NoiseModel.GAMMA:
            shape_k = (self.mu / self.sigma) ** 2
            scale = self.sigma**2 / self.mu
            return rng.gamma(shape_k, scale, size=shape)
        return np.where(rng.random(shape) < self.keep, 1.0 / self.keep, 0.0)

    def sample(self, omega, rng: np.random.Generator) -> tuple[np.ndarray, SpdOperator]:
        """One draw (omega_hat, A_hat) from the family conditioned at omega."""
        omega = self._check(omega)
        omega_hat = self.draw_multipliers(rng, self.edge_count) * omega
        return omega_hat, self.structure.assemble(omega_hat)

    def bootstrap_sample(self, omega_hat, rng: np.random.Generator) -> SpdOperator:
        """Re-sample the family conditioned at previously observed parameters."""
        return self.sample(omega_hat, rng)[1]

    def bootstrap_weights(self, omega_hat, rng: np.random.Generator, count: int) -> np.ndarray:
        """Weight vectors of `count` bootstrap draws, as columns of (E, count)."""
        omega_hat = self._check(omega_hat)
        return self.draw_multipliers(rng, (self.edge_count, count)) * omega_hat[:, None]

    def multiplier_outcomes(self) -> list[tuple[float, float]]:
        """Per-edge (probability, multiplier) support for finite models."""
        if self.model is NoiseModel.TWO_POINT:
            if self.low == self.high:
                return [(1.0, self.low)]
            return [(0.5, self.low), (0.5, self.high)]
        if self.model is NoiseModel.BERNOULLI_KEEP:
            if self.keep == 1.0:
                return [(1.0, 1.0)]
            return [(1.0 - self.keep, 0.0), (self.keep, 1.0 / self.keep)]
        raise UnsupportedModel("gamma noise is continuous and cannot be enumerated")


def sample(family: MatrixFamily, omega, rng: np.random.Generator):
    return family.sample(omega, rng)


def bootstrap_sample(family: MatrixFamily, omega_hat, rng: np.random.Generator):
    return family.bootstrap_sample(omega_hat, rng)


@dataclass(frozen=True)
class DiscreteEnsemble:
    """A finite distribution over SPD operators with exact probabilities."""

    probabilities: np.ndarray
    operators: list
    weights: np.ndarray | None = None  # outcome weight vectors, (k, E)

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if np.any(p <= 0):
            raise ValueError("outcome probabilities must be positive")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()}, expected 1")
        dims = {op.n for op in self.operators}
        if len(dims) != 1:
            raise ValueError(f"operators have mixed dimensions {dims}")
        object.__setattr__(self, "probabilities", p)

    def __len__(self):
        return len(self.operators)

    @property
    def n(self) -> int:
        return self.operators[0].n

    def dense_outcomes(self) -> np.ndarray:
        """All outcomes stacked as a (k, n, n) dense array."""
        return np.stack([op.dense() for op in self.operators])

    def mean(self) -> np.ndarray:
        return np.einsum("k,kij->ij", self.probabilities, self.dense_outcomes())


def make_discrete(family: MatrixFamily, omega) -> DiscreteEnsemble:
    """Enumerate every weight outcome of a finite-support family, exactly.

    Raises TooLarge when the outcome count would exceed 2**20 and
    UnsupportedModel for continuous (gamma) noise.
    """
    omega = family._check(omega)
    support = family.multiplier_outcomes()
    n_edges = family.edge_count
    n_outcomes = len(support) ** n_edges
    if n_outcomes > MAX_DISCRETE_OUTCOMES:
        raise TooLarge(f"{n_outcomes} outcomes exceed the cap of {MAX_DISCRETE_OUTCOMES}")
    probs = np.empty(n_outcomes)
    weights = np.empty((n_outcomes, n_edges))
    operators = []
    for i, combo in enumerate(itertools.product(support, repeat=n_edges)):
        p = 1.0
        for e, (pe, ze) in enumerate(combo):
            p *= pe
            weights[i, e] = ze * omega[e]
        probs[i] = p
        operators.append(family.structure.assemble(weights[i]))
    return DiscreteEnsemble(probs, operators, weights)
