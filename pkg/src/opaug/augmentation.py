"""Window functions, truncated-series machinery, and the augmentation-factor
estimators.

All estimators are bootstrap Monte-Carlo: they re-sample operators from the
noise family conditioned at the observed parameters and combine quadratic
forms in probe vectors.  Series terms follow the positive-semidefinite
orientation

    t_k = alpha^{-k} q^T A^{-1} ((alpha*A - A_s) A^{-1})^k q,

whose expectation over probes with auto-correlation L is
tr(S^T X^k S) for X = I - alpha^{-1} A^{-1/2} A_s A^{-1/2} and
S = A^{-1/2} L^{1/2}; the mean of X is PSD whenever E[A_s] <= alpha*A in the
Loewner order, which is what drives the monotonicity of the soft and shifted
windows.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    DegenerateDenominator,
    DimensionMismatch,
    InvalidOrder,
    InvalidShift,
    NonFinite,
    NotPositiveDefinite,
)
from .linalg import (
    POWER_MAX_ITER,
    POWER_TOL,
    Factorization,
    ProbeCorrelation,
    SpdOperator,
    factorize,
    generalized_spectral_norm_batch,
)

COMMUTATOR_TOL = 1e-10
PSD_TOL = 1e-10
BATCH_DENSE_LIMIT = 64  # per-sample loop above this dimension


# ---------------------------------------------------------------------------
# windows
# ---------------------------------------------------------------------------

class WindowTag(enum.Enum):
    SOFT = "soft"
    HARD = "hard"
    SHIFTED = "shifted"


@dataclass(frozen=True)
class WindowKind:
    """A truncation-window family; SHIFTED carries the base-point shift."""

    tag: WindowTag
    alpha: float = 1.0

    def __post_init__(self):
        if self.tag is WindowTag.SHIFTED and self.alpha < 1.0:
            raise InvalidShift(f"shift alpha must be >= 1, got {self.alpha}")

    @property
    def eta(self) -> float:
        return 1.0 - 1.0 / self.alpha


SOFT = WindowKind(WindowTag.SOFT)
HARD = WindowKind(WindowTag.HARD)


def shifted(alpha: float) -> WindowKind:
    return WindowKind(WindowTag.SHIFTED, float(alpha))


def window_weights(kind: WindowKind, order_n: int) -> tuple[np.ndarray, np.ndarray]:
    """Numerator and denominator weights over the window support.

    SOFT/HARD support k = 0..2N, SHIFTED k = 0..N; weights beyond the support
    are zero.  SOFT converges pointwise to (k, k+1) with PSD primitive
    blocks; HARD truncates abruptly; SHIFTED compensates the shifted
    base-point with the geometric eta tail.
    """
    if order_n < 1:
        raise InvalidOrder(f"window order must be >= 1, got {order_n}")
    if kind.tag is WindowTag.SHIFTED:
        k = np.arange(order_n + 1, dtype=np.float64)
        geometric = (1.0 - kind.eta ** (order_n - k + 1)) / (1.0 - kind.eta)
        return (k + 1.0) - geometric, k + 1.0
    k = np.arange(2 * order_n + 1, dtype=np.float64)
    num = k.copy()
    den = k + 1.0
    if kind.tag is WindowTag.SOFT:
        num[-1] = (k[-1] - 1.0) / 2.0
        den[-1] = k[-1] / 2.0
    return num, den


def window(kind: WindowKind, order_n: int, k: int) -> float:
    """The numerator weight w_N(k); zero outside the support."""
    if k < 0:
        raise InvalidOrder(f"k must be nonnegative, got {k}")
    num, _ = window_weights(kind, order_n)
    return float(num[k]) if k < len(num) else 0.0


def window_denom(kind: WindowKind, order_n: int, k: int) -> float:
    """The denominator weight wbar_N(k); zero outside the support."""
    if k < 0:
        raise InvalidOrder(f"k must be nonnegative, got {k}")
    _, den = window_weights(kind, order_n)
    return float(den[k]) if k < len(den) else 0.0


# ---------------------------------------------------------------------------
# series terms
# ---------------------------------------------------------------------------

def series_terms(
    base: Factorization,
    sample: SpdOperator,
    q: np.ndarray,
    n_max: int,
    alpha: float = 1.0,
) -> np.ndarray:
    """Quadratic-form series t_k for k = 0..n_max via the recursion
    v_0 = A^{-1} q, v_{k+1} = v_k - alpha^{-1} A^{-1}(A_s v_k), t_k = q^T v_k.
    """
    if alpha < 1.0:
        raise InvalidShift(f"alpha must be >= 1, got {alpha}")
    if base.n != sample.n or q.shape[0] != base.n:
        raise DimensionMismatch(
            f"base {base.n}, sample {sample.n}, probe {q.shape[0]} disagree"
        )
    t = np.empty(n_max + 1)
    v = base.solve(q)
    t[0] = q @ v
    for k in range(1, n_max + 1):
        v = v - base.solve(sample.dot(v)) / alpha
        t[k] = q @ v
    if not np.all(np.isfinite(t)):
        raise NonFinite("series terms overflowed")
    return t


def series_terms_batch(
    base: Factorization,
    apply_sample: Callable[[np.ndarray], np.ndarray],
    probes: np.ndarray,
    n_max: int,
    alphas: float | np.ndarray = 1.0,
) -> np.ndarray:
    """Column-wise series terms for a batch of samples sharing one base.

    `apply_sample` applies the i-th sample operator to the i-th column.
    Returns an (m, n_max + 1) array with row i holding the terms for probe
    column i (and, when `alphas` is an array, shift alphas[i]).
    """
    inv_alpha = 1.0 / np.asarray(alphas, dtype=np.float64)
    t = np.empty((probes.shape[1], n_max + 1))
    v = base.solve(probes)
    t[:, 0] = np.einsum("ij,ij->j", probes, v)
    for k in range(1, n_max + 1):
        v = v - base.solve(apply_sample(v)) * inv_alpha
        t[:, k] = np.einsum("ij,ij->j", probes, v)
    if not np.all(np.isfinite(t)):
        raise NonFinite("series terms overflowed")
    return t


# ---------------------------------------------------------------------------
# method descriptors
# ---------------------------------------------------------------------------

class Method(enum.Enum):
    NAIVE = "naive"
    BASIC = "basic"
    AG = "ag"
    EAG = "eag"
    TEAG_SOFT = "teag-s"
    TEAG_HARD = "teag-h"
    ASTEAG = "asteag"


ENERGY_METHODS = {Method.EAG, Method.TEAG_SOFT, Method.TEAG_HARD, Method.ASTEAG}


def _check_commuting_psd(left: np.ndarray | None, right: np.ndarray | None, names: str):
    for mat in (left, right):
        if mat is None:
            continue
        scale = max(1.0, float(np.linalg.norm(mat)))
        if np.linalg.norm(mat - mat.T) > PSD_TOL * scale:
            raise ValueError(f"{names}: matrices must be symmetric")
        if np.min(np.linalg.eigvalsh(mat)) < -PSD_TOL * scale:
            raise NotPositiveDefinite(f"{names}: matrices must be positive semidefinite")
    if left is not None and right is not None:
        scale = max(1.0, float(np.linalg.norm(left) * np.linalg.norm(right)))
        if np.linalg.norm(left @ right - right @ left) > COMMUTATOR_TOL * scale:
            raise ValueError(f"{names}: matrices must commute")


@dataclass(frozen=True)
class AugmentationSpec:
    """Method selector plus order, sample count, and norm/prior matrices.

    `order` is the reported order: the highest power of a bootstrap sample in
    the estimator, i.e. 2N for the truncated windows and N for the
    accelerated shifted method.  R and B configure the AG probe law W = RB;
    C and R configure the energy probe law L = CR; None means identity.
    """

    method: Method
    order: int = 0
    samples: int = 100
    R: np.ndarray | None = None
    B: np.ndarray | None = None
    C: np.ndarray | None = None
    power_tol: float = POWER_TOL
    power_max_iter: int = POWER_MAX_ITER

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError(f"sample count must be >= 1, got {self.samples}")
        if self.method in (Method.TEAG_SOFT, Method.TEAG_HARD):
            if self.order < 2 or self.order % 2:
                raise InvalidOrder(f"truncated-window order must be even and >= 2, got {self.order}")
        elif self.method is Method.ASTEAG:
            if self.order < 1:
                raise InvalidOrder(f"accelerated order must be >= 1, got {self.order}")
        if self.method is Method.AG:
            _check_commuting_psd(self.R, self.B, "R, B")
        elif self.method in ENERGY_METHODS:
            _check_commuting_psd(self.R, self.C, "R, C")

    @property
    def window_n(self) -> int:
        """Internal window order N (order = 2N for T-EAG, N for AST-EAG)."""
        return self.order // 2 if self.method in (Method.TEAG_SOFT, Method.TEAG_HARD) else self.order

    @property
    def window_kind(self) -> WindowKind:
        return SOFT if self.method is Method.TEAG_SOFT else HARD


@dataclass
class AugmentationEstimate:
    """An estimated augmentation factor with estimator diagnostics."""

    beta: float
    raw_beta: float
    numerator: float
    denominator: float
    stderr: float
    order_numerators: np.ndarray | None = None
    order_denominators: np.ndarray | None = None
    alphas: np.ndarray | None = None
    power_converged: bool = True


def _ratio_estimate(num_terms: np.ndarray, den_terms: np.ndarray, clamp: bool) -> AugmentationEstimate:
    total_num = float(num_terms.sum())
    total_den = float(den_terms.sum())
    if total_den == 0.0:
        raise DegenerateDenominator("all bootstrap quadratic forms are zero")
    raw = total_num / total_den
    m = len(num_terms)
    resid = num_terms - raw * den_terms
    stderr = float(np.sqrt(np.mean(resid**2) / m) / abs(total_den / m))
    beta = max(0.0, raw) if clamp else raw
    return AugmentationEstimate(beta, raw, total_num, total_den, stderr)


# ---------------------------------------------------------------------------
# bootstrap solves
# ---------------------------------------------------------------------------

def _solve_per_sample(structure, weight_cols: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve the i-th bootstrap operator against rhs[i] for every column i.

    weight_cols is (E, m); rhs is (m, n, k).  Dense small systems go through
    one stacked Cholesky + solve; everything else factorizes per sample.
    Raises NotPositiveDefinite with the offending sample index.
    """
    m = weight_cols.shape[1]
    n = structure.n
    if structure.dense and n <= BATCH_DENSE_LIMIT:
        batch = structure.assemble_batch(weight_cols)
        try:
            np.linalg.cholesky(batch)
        except np.linalg.LinAlgError:
            for i in range(m):
                try:
                    np.linalg.cholesky(batch[i])
                except np.linalg.LinAlgError as exc:
                    raise NotPositiveDefinite(f"bootstrap sample {i} failed to factorize") from exc
        return np.linalg.solve(batch, rhs)
    out = np.empty_like(rhs)
    for i in range(m):
        try:
            fact = factorize(structure.assemble(weight_cols[:, i]))
        except NotPositiveDefinite as exc:
            raise NotPositiveDefinite(f"bootstrap sample {i} failed to factorize: {exc}") from exc
        out[i] = fact.solve(rhs[i])
    return out


def _pair_product(left: np.ndarray | None, right: np.ndarray | None, n: int) -> np.ndarray | None:
    """The product of two optional (identity-when-None) matrices."""
    if left is None and right is None:
        return None
    lm = np.eye(n) if left is None else left
    rm = np.eye(n) if right is None else right
    return lm @ rm


def _weighted_dot(u: np.ndarray, v: np.ndarray, weight: np.ndarray | None) -> np.ndarray:
    """Column-wise <u_i, v_i>_weight over (n, m) stacks."""
    wv = v if weight is None else weight @ v
    return np.einsum("ij,ij->j", u, wv)


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def estimate_beta_basic(
    observed: SpdOperator,
    omega_hat: np.ndarray,
    family,
    b: np.ndarray,
    samples: int,
    rng: np.random.Generator,
) -> AugmentationEstimate:
    """Rhs-directed augmentation factor: the variance-over-second-moment
    bound for shrinking the b component, estimated from bootstrap solves
    b^T A_b^{-1} b."""
    b = np.asarray(b, dtype=np.float64)
    bnorm2 = float(b @ b)
    if bnorm2 == 0.0:
        raise ValueError("b must be nonzero")
    if samples < 2:
        raise ValueError(f"need at least two samples, got {samples}")
    weight_cols = family.bootstrap_weights(omega_hat, rng, samples)
    rhs = np.broadcast_to(b[None, :, None], (samples, len(b), 1))
    sols = _solve_per_sample(family.structure, weight_cols, np.ascontiguousarray(rhs))
    s = sols[:, :, 0] @ b
    m1 = float(np.mean(s))
    m2 = float(np.mean(s**2))
    if m2 == 0.0:
        raise DegenerateDenominator("all bootstrap quadratic forms are zero")
    beta = (m2 - m1**2) / m2 / bnorm2
    # delta-method SE for f(m1, m2) = (1 - m1^2/m2) / ||b||^2
    grad = np.array([-2.0 * m1 / m2, m1**2 / m2**2]) / bnorm2
    moments = np.stack([s, s**2])
    cov = np.cov(moments, bias=True) / samples
    stderr = float(np.sqrt(grad @ cov @ grad))
    return AugmentationEstimate(beta, beta, m2 - m1**2, m2 * bnorm2, stderr)


def estimate_beta_ag(
    observed: SpdOperator,
    omega_hat: np.ndarray,
    family,
    samples: int,
    rng: np.random.Generator,
    R: np.ndarray | None = None,
    B: np.ndarray | None = None,
) -> AugmentationEstimate:
    """Semi-Bayesian augmentation factor for the choice K = R A^{-1} B.

    Probes q ~ N(0, W) and p ~ N(0, BW) with W = RB are drawn on two
    independent streams; no clamping is applied.
    """
    _check_commuting_psd(R, B, "R, B")
    n = observed.n
    w_mat = _pair_product(R, B, n)
    bw_mat = _pair_product(B, w_mat, n)
    rw_mat = _pair_product(R, w_mat, n)
    corr_q = ProbeCorrelation.identity(n) if w_mat is None else ProbeCorrelation(w_mat)
    corr_p = ProbeCorrelation.identity(n) if bw_mat is None else ProbeCorrelation(bw_mat)
    base = observed.factorization()

    weight_cols = family.bootstrap_weights(omega_hat, rng, samples)
    q = corr_q.sample_block(rng, samples)
    p = corr_p.sample_block(rng, samples)
    rhs = np.stack([q.T, p.T], axis=2)  # (m, n, 2)
    sols = _solve_per_sample(family.structure, weight_cols, rhs)
    u = sols[:, :, 0].T  # A_b^{-1} q, columns
    t = sols[:, :, 1].T  # A_b^{-1} p
    base_q = base.solve(q)
    num_terms = _weighted_dot(u, u, w_mat) - _weighted_dot(u, base_q, w_mat)
    den_terms = _weighted_dot(t, t, rw_mat)
    return _ratio_estimate(num_terms, den_terms, clamp=False)


def estimate_beta_eag(
    observed: SpdOperator,
    omega_hat: np.ndarray,
    family,
    samples: int,
    rng: np.random.Generator,
    C: np.ndarray | None = None,
    R: np.ndarray | None = None,
) -> AugmentationEstimate:
    """Untruncated energy-norm augmentation factor, clamped at zero.

    The expensive baseline: every bootstrap sample is factorized.
    """
    _check_commuting_psd(R, C, "R, C")
    n = observed.n
    l_mat = _pair_product(C, R, n)
    corr = ProbeCorrelation.identity(n) if l_mat is None else ProbeCorrelation(l_mat)

    weight_cols = family.bootstrap_weights(omega_hat, rng, samples)
    q = corr.sample_block(rng, samples)
    sols = _solve_per_sample(family.structure, weight_cols, q.T[:, :, None])
    u = sols[:, :, 0].T
    quad = np.einsum("ij,ij->j", u, observed.dot(u))  # u^T A_hat u
    cross = np.einsum("ij,ij->j", q, u)
    return _ratio_estimate(quad - cross, quad, clamp=True)


def estimate_beta_teag(
    observed: SpdOperator,
    omega_hat: np.ndarray,
    family,
    order_n: int,
    kind: WindowKind,
    samples: int,
    rng: np.random.Generator,
    C: np.ndarray | None = None,
    R: np.ndarray | None = None,
) -> AugmentationEstimate:
    """Truncated energy-norm augmentation factor with soft or hard windows.

    Performs no bootstrap factorizations; only solves against the observed
    operator (series terms up to k = 2N).
    """
    if kind.tag is WindowTag.SHIFTED:
        raise InvalidShift("use estimate_beta_asteag for shifted windows")
    _check_commuting_psd(R, C, "R, C")
    n = observed.n
    l_mat = _pair_product(C, R, n)
    corr = ProbeCorrelation.identity(n) if l_mat is None else ProbeCorrelation(l_mat)
    base = observed.factorization()

    weight_cols = family.bootstrap_weights(omega_hat, rng, samples)
    q = corr.sample_block(rng, samples)
    terms = series_terms_batch(
        base, lambda v: family.structure.apply_weighted(weight_cols, v), q, 2 * order_n
    )
    w_num, w_den = window_weights(kind, order_n)
    estimate = _ratio_estimate(terms @ w_num, terms @ w_den, clamp=True)
    per_order = terms.sum(axis=0)
    estimate.order_numerators = w_num * per_order
    estimate.order_denominators = w_den * per_order
    return estimate


def estimate_beta_asteag(
    observed: SpdOperator,
    omega_hat: np.ndarray,
    family,
    order_n: int,
    samples: int,
    rng: np.random.Generator,
    C: np.ndarray | None = None,
    R: np.ndarray | None = None,
    power_tol: float = POWER_TOL,
    power_max_iter: int = POWER_MAX_ITER,
) -> AugmentationEstimate:
    """Accelerated shifted truncated energy-norm factor.

    Each bootstrap sample gets its own base-point shift
    alpha_i = max(1, ||A_hat^{-1/2} A_b_i A_hat^{-1/2}||_2) from the power
    method (the observed operator plays the base; the floor at 1 keeps the
    shifted windows defined).  Non-convergence of the power method is
    flagged, not fatal.
    """
    if order_n < 1:
        raise InvalidOrder(f"order must be >= 1, got {order_n}")
    _check_commuting_psd(R, C, "R, C")
    n = observed.n
    l_mat = _pair_product(C, R, n)
    corr = ProbeCorrelation.identity(n) if l_mat is None else ProbeCorrelation(l_mat)
    base = observed.factorization()

    weight_cols = family.bootstrap_weights(omega_hat, rng, samples)
    apply_boot = lambda v: family.structure.apply_weighted(weight_cols, v)
    starts = rng.standard_normal((n, samples))
    alphas_raw, converged = generalized_spectral_norm_batch(
        apply_boot, base, starts, tol=power_tol, max_iter=power_max_iter
    )
    alphas = np.maximum(1.0, alphas_raw)
    q = corr.sample_block(rng, samples)
    terms = series_terms_batch(base, apply_boot, q, order_n, alphas)

    k = np.arange(order_n + 1, dtype=np.float64)
    eta = (1.0 - 1.0 / alphas)[:, None]
    w_num = (k + 1.0) - (1.0 - eta ** (order_n - k + 1.0)) / (1.0 - eta)
    scale = alphas**-2.0
    num_terms = scale * np.einsum("ik,ik->i", w_num, terms)
    den_terms = scale * (terms @ (k + 1.0))
    estimate = _ratio_estimate(num_terms, den_terms, clamp=True)
    estimate.alphas = alphas
    estimate.power_converged = bool(np.all(converged))
    return estimate


def augmented_solve(
    observed_fact: Factorization,
    method: Method,
    beta: float,
    b: np.ndarray,
    R: np.ndarray | None = None,
    B: np.ndarray | None = None,
    C: np.ndarray | None = None,
) -> np.ndarray:
    """Apply the augmented inverse operator for the given method family.

    AG subtracts beta * R A^{-1} B b; the energy methods subtract
    beta * A^{-1} C b; BASIC shrinks the b component of the naive solution.
    """
    if not np.isfinite(beta):
        raise NonFinite(f"beta must be finite, got {beta}")
    b = np.asarray(b, dtype=np.float64)
    x_naive = observed_fact.solve(b)
    if method is Method.NAIVE or beta == 0.0:
        return x_naive
    if method is Method.BASIC:
        return x_naive - beta * b * (b @ x_naive)
    if method is Method.AG:
        rhs = b if B is None else B @ b
        y = x_naive if B is None else observed_fact.solve(rhs)
        correction = y if R is None else R @ y
        return x_naive - beta * correction
    if method in ENERGY_METHODS:
        y = x_naive if C is None else observed_fact.solve(C @ b)
        return x_naive - beta * y
    raise ValueError(f"no augmented solve for method {method}")
