"""SPD operators, factorization-backed solves, correlated probe sampling,
and the generalized spectral norm via power iteration.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg.lapack import dpstrf

from .errors import DimensionMismatch, NonFinite, NotPositiveDefinite

SYMMETRY_RTOL = 1e-12
POWER_TOL = 1e-6
POWER_MAX_ITER = 200


class SpdOperator:
    """A symmetric matrix (dense or sparse) intended to be positive definite.

    Symmetry is checked at construction to within ``SYMMETRY_RTOL`` relative
    on stored entries.  Positive definiteness is *not* checked here; it is
    established by :func:`factorize`, which fails iff a pivot is non-positive.
    """

    __slots__ = ("matrix", "n", "is_sparse", "_fact")

    def __init__(self, matrix):
        if sp.issparse(matrix):
            m = sp.csr_array(matrix).astype(np.float64)
            if m.shape[0] != m.shape[1]:
                raise DimensionMismatch(f"matrix is {m.shape[0]}x{m.shape[1]}, expected square")
            scale = np.max(np.abs(m.data)) if m.nnz else 0.0
            asym = m - m.T
            worst = np.max(np.abs(asym.data)) if asym.nnz else 0.0
            self.is_sparse = True
        else:
            m = np.asarray(matrix, dtype=np.float64)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise DimensionMismatch(f"matrix has shape {m.shape}, expected square")
            scale = np.max(np.abs(m)) if m.size else 0.0
            worst = np.max(np.abs(m - m.T)) if m.size else 0.0
            self.is_sparse = False
        if worst > SYMMETRY_RTOL * max(scale, 1.0):
            raise DimensionMismatch(
                f"matrix is not symmetric: max asymmetry {worst:.3e} vs scale {scale:.3e}"
            )
        self.matrix = m
        self.n = m.shape[0]
        self._fact = None

    def dot(self, x: np.ndarray) -> np.ndarray:
        """Apply the operator to a vector or a stack of column vectors."""
        if x.shape[0] != self.n:
            raise DimensionMismatch(f"operand has leading dimension {x.shape[0]}, expected {self.n}")
        return self.matrix @ x

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else self.matrix

    def factorization(self) -> "Factorization":
        """Cached factorization, computed on first use."""
        if self._fact is None:
            self._fact = factorize(self)
        return self._fact


class Factorization:
    """Handle for repeated solves against a fixed SPD operator.

    Dense operators use a Cholesky factorization; sparse operators use a
    SuperLU factorization in symmetric mode with a fill-reducing ordering
    (equivalent to an L D L^T factorization; positive pivots certify
    positive definiteness).
    """

    __slots__ = ("n", "_kind", "_handle")

    def __init__(self, n, kind, handle):
        self.n = n
        self._kind = kind
        self._handle = handle

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if rhs.shape[0] != self.n:
            raise DimensionMismatch(f"rhs has leading dimension {rhs.shape[0]}, expected {self.n}")
        if self._kind == "dense":
            return sla.cho_solve(self._handle, rhs)
        return self._handle.solve(rhs)


def factorize(op: SpdOperator) -> Factorization:
    """Factorize an SPD operator for repeated solves.

    Raises
    ------
    NotPositiveDefinite
        If a pivot <= 0 is encountered, i.e. the operator is not numerically
        positive definite.
    """
    if op.is_sparse:
        csc = sp.csc_matrix(op.matrix)
        try:
            lu = spla.splu(
                csc,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
        except RuntimeError as exc:  # singular matrix
            raise NotPositiveDefinite(f"sparse factorization failed: {exc}") from exc
        pivots = lu.U.diagonal()
        if not np.all(np.isfinite(pivots)) or np.min(pivots) <= 0.0:
            raise NotPositiveDefinite(
                f"non-positive pivot {np.min(pivots):.3e} in sparse factorization"
            )
        return Factorization(op.n, "sparse", lu)
    try:
        c, low = sla.cho_factor(op.matrix, lower=True)
    except sla.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    return Factorization(op.n, "dense", (c, low))


def solve(fact: Factorization, rhs: np.ndarray) -> np.ndarray:
    """Solve against a factorized operator (thin wrapper over the handle)."""
    return fact.solve(rhs)


class ProbeCorrelation:
    """A PSD auto-correlation matrix with a precomputed factor F, Lambda = F F^T.

    Probe vectors q = F z with z i.i.d. standard normal then satisfy
    E[q q^T] = Lambda exactly in distribution.  The factor is the Cholesky
    factor when Lambda is positive definite and a pivoted semidefinite
    factorization otherwise.  An exact identity gets a fast path with no
    matrix multiply per draw.
    """

    FACTOR_RTOL = 1e-10

    __slots__ = ("matrix", "factor", "n", "_identity")

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"correlation matrix has shape {m.shape}")
        n = m.shape[0]
        self.matrix = m
        self.n = n
        self._identity = bool(np.array_equal(m, np.eye(n)))
        if self._identity:
            self.factor = np.eye(n)
            return
        c, piv, rank, info = dpstrf(m, lower=1)
        if info < 0:
            raise NotPositiveDefinite(f"pivoted factorization failed (info={info})")
        factor = np.tril(c)[:, :rank]
        permuted = np.empty_like(factor)
        permuted[piv - 1] = factor
        resid = np.linalg.norm(permuted @ permuted.T - m)
        if resid > self.FACTOR_RTOL * max(np.linalg.norm(m), 1.0):
            raise NotPositiveDefinite(
                f"matrix is not positive semidefinite (factor residual {resid:.3e})"
            )
        self.factor = permuted

    @classmethod
    def identity(cls, n: int) -> "ProbeCorrelation":
        return cls(np.eye(n))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Draw one probe vector q with E[q q^T] = Lambda."""
        if self._identity:
            return rng.standard_normal(self.n)
        return self.factor @ rng.standard_normal(self.factor.shape[1])

    def sample_block(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw `count` probes as the columns of an (n, count) array."""
        if self._identity:
            return rng.standard_normal((self.n, count))
        return self.factor @ rng.standard_normal((self.factor.shape[1], count))


def sample_probe(corr: ProbeCorrelation, rng: np.random.Generator) -> np.ndarray:
    return corr.sample(rng)


class SpectralNorm(NamedTuple):
    value: float
    converged: bool
    iterations: int


def generalized_spectral_norm(
    num: SpdOperator,
    den: Factorization,
    tol: float = POWER_TOL,
    max_iter: int = POWER_MAX_ITER,
    rng: np.random.Generator | None = None,
) -> SpectralNorm:
    """Largest generalized eigenvalue of (num, den) by power iteration.

    Iterates v_k = num (den^{-1} v_{k-1}) and measures successive ratios in
    the den^{-1} norm; the ratio sequence increases monotonically to
    ||den^{-1/2} num den^{-1/2}||_2.  Stops when consecutive ratios agree to
    `tol` relative, else returns the max_iter-th iterate with converged=False.
    """
    if num.n != den.n:
        raise DimensionMismatch(f"num is {num.n}-dimensional, den is {den.n}-dimensional")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if rng is None:
        rng = np.random.default_rng()
    v = rng.standard_normal(num.n)
    s = den.solve(v)
    m2 = float(v @ s)
    if not np.isfinite(m2) or m2 <= 0.0:
        raise NonFinite("degenerate start vector in power iteration")
    ratio_prev = None
    ratio = 0.0
    iterations = 0
    for iterations in range(1, max_iter + 1):
        scale = np.sqrt(m2)
        v = num.dot(s / scale)
        s = den.solve(v)
        m2 = float(v @ s)
        if not np.isfinite(m2):
            raise NonFinite("overflow in power iteration")
        if m2 <= 0.0:
            raise NonFinite("power iterate collapsed to zero")
        ratio = float(np.sqrt(m2))
        if ratio_prev is not None and abs(ratio - ratio_prev) <= tol * ratio:
            return SpectralNorm(ratio, True, iterations)
        ratio_prev = ratio
    return SpectralNorm(ratio, False, iterations)


def generalized_spectral_norm_batch(
    apply_num: Callable[[np.ndarray], np.ndarray],
    den: Factorization,
    start: np.ndarray,
    tol: float = POWER_TOL,
    max_iter: int = POWER_MAX_ITER,
) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise power iteration for a batch of numerators sharing one
    denominator factorization.

    `apply_num` applies the i-th numerator to the i-th column of its input.
    Each column records its ratio at its own first convergence, so results
    match the single-pair iteration independently of the batch composition.
    Returns (values, converged) arrays of length start.shape[1].
    """
    v = start.copy()
    s = den.solve(v)
    m2 = np.einsum("ij,ij->j", v, s)
    if not np.all(np.isfinite(m2)) or np.any(m2 <= 0.0):
        raise NonFinite("degenerate start vectors in batched power iteration")
    count = start.shape[1]
    values = np.zeros(count)
    converged = np.zeros(count, dtype=bool)
    ratio_prev = np.full(count, -1.0)
    for _ in range(max_iter):
        scale = np.sqrt(m2)
        v = apply_num(s / scale)
        s = den.solve(v)
        m2 = np.einsum("ij,ij->j", v, s)
        if not np.all(np.isfinite(m2)):
            raise NonFinite("overflow in batched power iteration")
        if np.any(m2 <= 0.0):
            raise NonFinite("power iterate collapsed to zero")
        ratio = np.sqrt(m2)
        hit = (~converged) & (ratio_prev >= 0.0) & (np.abs(ratio - ratio_prev) <= tol * ratio)
        values[hit] = ratio[hit]
        converged |= hit
        if np.all(converged):
            return values, converged
        ratio_prev = ratio
    values[~converged] = ratio[~converged]
    return values, converged
