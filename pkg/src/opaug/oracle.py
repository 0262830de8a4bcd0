"""Exact brute-force computations on discrete ensembles and executable checks
of the supporting lemmas.  Everything here is dense, enumerated, and size
capped; it is the ground truth the Monte-Carlo estimators and the window
theory are tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .augmentation import WindowKind, WindowTag, shifted, window_weights
from .errors import PreconditionViolated, TooLarge
from .noise import DiscreteEnsemble

MAX_ORACLE_DIM = 8
MAX_ORACLE_ORDER = 64
EIG_SLACK = 1e-10


def _sym_power(mat: np.ndarray, exponent: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * vals**exponent) @ vecs.T


def _as_dense(op_or_matrix) -> np.ndarray:
    if hasattr(op_or_matrix, "dense"):
        return op_or_matrix.dense()
    return np.asarray(op_or_matrix, dtype=np.float64)


def _check_size(ensemble: DiscreteEnsemble):
    if ensemble.n > MAX_ORACLE_DIM:
        raise TooLarge(f"oracle is capped at dimension {MAX_ORACLE_DIM}, got {ensemble.n}")


@dataclass
class ExactMoments:
    """Probability-weighted dense moments of a discrete ensemble.

    Holds E[A_s^{-1}], E[A_s^{-1} A A_s^{-1}], and E[X^k] for
    X = I - alpha^{-1} A^{-1/2} A_s A^{-1/2} up to the requested order.
    """

    n: int
    alpha: float
    mean_inverse: np.ndarray
    mean_inv_a_inv: np.ndarray
    x_powers: np.ndarray  # (order + 1, n, n)

    @classmethod
    def compute(cls, ensemble: DiscreteEnsemble, truth, order: int, alpha: float = 1.0) -> "ExactMoments":
        _check_size(ensemble)
        if order > MAX_ORACLE_ORDER:
            raise TooLarge(f"moment order capped at {MAX_ORACLE_ORDER}, got {order}")
        a = _as_dense(truth)
        n = a.shape[0]
        a_inv_half = _sym_power(a, -0.5)
        outcomes = ensemble.dense_outcomes()
        probs = ensemble.probabilities
        mean_inverse = np.zeros((n, n))
        mean_inv_a_inv = np.zeros((n, n))
        x_powers = np.zeros((order + 1, n, n))
        x_powers[0] = np.eye(n)
        for p, mat in zip(probs, outcomes):
            inv = np.linalg.inv(mat)
            mean_inverse += p * inv
            mean_inv_a_inv += p * (inv @ a @ inv)
            x = np.eye(n) - (a_inv_half @ mat @ a_inv_half) / alpha
            power = np.eye(n)
            for k in range(1, order + 1):
                power = power @ x
                x_powers[k] += p * power
        return cls(n, alpha, mean_inverse, mean_inv_a_inv, x_powers)


def _probe_shaper(truth, l_mat) -> np.ndarray:
    """S = A^{-1/2} L^{1/2}, the congruence shared by every trace form."""
    a = _as_dense(truth)
    l_half = np.eye(a.shape[0]) if l_mat is None else _sym_power(_as_dense(l_mat), 0.5)
    return _sym_power(a, -0.5) @ l_half


def exact_beta_energy(ensemble: DiscreteEnsemble, truth, l_mat=None) -> float:
    """Error-minimizing energy-norm factor by dense enumeration:
    tr E[L^{1/2} A_s^{-1} A (A_s^{-1} - A^{-1}) L^{1/2}] over
    tr E[L^{1/2} A_s^{-1} A A_s^{-1} L^{1/2}]."""
    _check_size(ensemble)
    a = _as_dense(truth)
    lm = np.eye(a.shape[0]) if l_mat is None else _as_dense(l_mat)
    a_inv = np.linalg.inv(a)
    num = 0.0
    den = 0.0
    for p, mat in zip(ensemble.probabilities, ensemble.dense_outcomes()):
        inv = np.linalg.inv(mat)
        den += p * np.trace(lm @ inv @ a @ inv)
        num += p * np.trace(lm @ inv @ a @ (inv - a_inv))
    return num / den


def exact_beta_ag(ensemble: DiscreteEnsemble, truth, r_mat=None, b_mat=None) -> tuple[float, float]:
    """Exact optimal factor and its variance lower bound for K = R A^{-1} B.

    Returns (beta_star, beta_bound) with beta_bound the trace-of-covariance
    bound; beta_bound <= beta_star whenever E[A_s] <= A.
    """
    _check_size(ensemble)
    a = _as_dense(truth)
    n = a.shape[0]
    rm = np.eye(n) if r_mat is None else _as_dense(r_mat)
    bm = np.eye(n) if b_mat is None else _as_dense(b_mat)
    w_half = _sym_power(rm @ bm, 0.5)
    r_half = _sym_power(rm, 0.5)
    b_half = _sym_power(bm, 0.5)
    a_inv = np.linalg.inv(a)
    d_mat = w_half @ a_inv @ w_half
    num_star = 0.0
    mean_y = np.zeros((n, n))
    mean_y_sq = 0.0
    den = 0.0
    for p, mat in zip(ensemble.probabilities, ensemble.dense_outcomes()):
        y = w_half @ np.linalg.inv(mat) @ w_half
        mean_y += p * y
        mean_y_sq += p * np.trace(y @ y)
        num_star += p * np.trace(y @ (y - d_mat))
        den += p * np.linalg.norm(r_half @ y @ b_half) ** 2
    beta_star = num_star / den
    beta_bound = (mean_y_sq - np.trace(mean_y @ mean_y)) / den
    return beta_star, beta_bound


def exact_beta_basic(ensemble: DiscreteEnsemble, b: np.ndarray) -> float:
    """Exact variance-over-second-moment bound for the b-directed shrink."""
    _check_size(ensemble)
    b = np.asarray(b, dtype=np.float64)
    s = np.array([b @ np.linalg.solve(mat, b) for mat in ensemble.dense_outcomes()])
    m1 = float(ensemble.probabilities @ s)
    m2 = float(ensemble.probabilities @ s**2)
    return (m2 - m1**2) / m2 / float(b @ b)


def ensemble_shift(ensemble: DiscreteEnsemble, truth) -> float:
    """Smallest alpha (floored at 1) with every outcome below alpha * A."""
    a = _as_dense(truth)
    worst = max(
        float(np.max(sla.eigvalsh(mat, a))) for mat in ensemble.dense_outcomes()
    )
    return max(1.0, worst)


def exact_truncated_factor(
    ensemble: DiscreteEnsemble,
    truth,
    l_mat=None,
    order_n: int = 1,
    kind: WindowKind | None = None,
    alpha: float | None = None,
) -> float:
    """Exact windowed ratio of trace moments at truncation order N.

    For SHIFTED windows, alpha defaults to the smallest valid shift over the
    ensemble support (ensemble_shift).
    """
    kind = kind if kind is not None else WindowKind(WindowTag.SOFT)
    if kind.tag is WindowTag.SHIFTED:
        a_val = kind.alpha if alpha is None else alpha
        if alpha is None and kind.alpha == 1.0:
            a_val = ensemble_shift(ensemble, truth)
        kind = shifted(a_val)
    else:
        a_val = 1.0
    w_num, w_den = window_weights(kind, order_n)
    moments = ExactMoments.compute(ensemble, truth, order=len(w_num) - 1, alpha=a_val)
    s = _probe_shaper(truth, l_mat)
    traces = np.array([np.trace(s.T @ xk @ s) for xk in moments.x_powers])
    return float((w_num @ traces) / (w_den @ traces))


def exact_accel_factor(ensemble: DiscreteEnsemble, truth, l_mat=None, order_n: int = 1) -> float:
    """Exact accelerated shifted factor with the per-outcome shift
    alpha(A_s) = max(1, ||A^{-1/2} A_s A^{-1/2}||_2)."""
    _check_size(ensemble)
    a = _as_dense(truth)
    s = _probe_shaper(truth, l_mat)
    a_inv_half = _sym_power(a, -0.5)
    k = np.arange(order_n + 1, dtype=np.float64)
    num = 0.0
    den = 0.0
    for p, mat in zip(ensemble.probabilities, ensemble.dense_outcomes()):
        alpha = max(1.0, float(np.max(sla.eigvalsh(mat, a))))
        eta = 1.0 - 1.0 / alpha
        x = np.eye(a.shape[0]) - (a_inv_half @ mat @ a_inv_half) / alpha
        traces = np.empty(order_n + 1)
        power = np.eye(a.shape[0])
        traces[0] = np.trace(s.T @ power @ s)
        for j in range(1, order_n + 1):
            power = power @ x
            traces[j] = np.trace(s.T @ power @ s)
        w_num = (k + 1.0) - (1.0 - eta ** (order_n - k + 1.0)) / (1.0 - eta)
        num += p * alpha**-2.0 * float(w_num @ traces)
        den += p * alpha**-2.0 * float((k + 1.0) @ traces)
    return num / den


def explicit_order2_factor(ensemble: DiscreteEnsemble, truth, l_mat=None, hard: bool = False) -> float:
    """Independent cross-check: the spelled-out order-2 formulas built from
    A^{-1} Z A^{-1} products with Z = A_s - A (no window machinery).

    Matches the windowed order-2 factor on mean-zero ensembles; for biased
    ensembles the linear terms enter with the opposite orientation.
    """
    _check_size(ensemble)
    a = _as_dense(truth)
    lm = np.eye(a.shape[0]) if l_mat is None else _as_dense(l_mat)
    a_inv = np.linalg.inv(a)
    lin = np.zeros_like(a)
    quad = np.zeros_like(a)
    for p, mat in zip(ensemble.probabilities, ensemble.dense_outcomes()):
        z = mat - a
        lin += p * (a_inv @ z @ a_inv)
        quad += p * (a_inv @ z @ a_inv @ z @ a_inv)
    t_lin = np.trace(lm @ lin)
    t_quad = np.trace(lm @ quad)
    t_base = np.trace(lm @ a_inv)
    if hard:
        return (2.0 * t_quad + t_lin) / (3.0 * t_quad + 2.0 * t_lin + t_base)
    return (0.5 * t_quad + t_lin) / (t_quad + 2.0 * t_lin + t_base)


# ---------------------------------------------------------------------------
# lemma checks
# ---------------------------------------------------------------------------

@dataclass
class CheckReport:
    name: str
    passed: bool
    precondition_ok: bool = True
    detail: dict = field(default_factory=dict)

    def __bool__(self):
        return self.passed


def check_loewner(ensemble: DiscreteEnsemble, truth) -> CheckReport:
    """Inversion inverts the expected Loewner order: E[A_s] <= A implies
    E[A_s^{-1}] >= A^{-1} (up to eigenvalue slack)."""
    a = _as_dense(truth)
    mean = ensemble.mean()
    pre_margin = float(np.min(np.linalg.eigvalsh(a - mean)))
    if pre_margin < -EIG_SLACK:
        return CheckReport("loewner", False, precondition_ok=False, detail={"pre_margin": pre_margin})
    mean_inv = np.zeros_like(a)
    for p, mat in zip(ensemble.probabilities, ensemble.dense_outcomes()):
        mean_inv += p * np.linalg.inv(mat)
    margin = float(np.min(np.linalg.eigvalsh(mean_inv - np.linalg.inv(a))))
    return CheckReport("loewner", margin >= -EIG_SLACK, detail={"margin": margin})


def check_trace_inequality(sample_set, s_mat, j: int, k: int, r: int) -> CheckReport:
    """For PSD samples and j <= k, 0 <= r <= j:
    E tr(S^T X^j S) E tr(S^T X^k S) <= E tr(S^T X^{j-r} S) E tr(S^T X^{k+r} S)."""
    if not (j <= k and 0 <= r <= j):
        raise PreconditionViolated(f"need 0 <= r <= j <= k, got j={j}, k={k}, r={r}")
    s = np.asarray(s_mat, dtype=np.float64)
    mats = [_as_dense(m) for m in sample_set]
    for m in mats:
        if float(np.min(np.linalg.eigvalsh(m))) < -EIG_SLACK:
            raise PreconditionViolated("samples must be positive semidefinite")

    def mean_trace(power):
        return float(np.mean([np.trace(s.T @ np.linalg.matrix_power(m, power) @ s) for m in mats]))

    lhs = mean_trace(j) * mean_trace(k)
    rhs = mean_trace(j - r) * mean_trace(k + r)
    scale = max(abs(lhs), abs(rhs), 1.0)
    return CheckReport("trace-inequality", lhs <= rhs + 1e-12 * scale, detail={"lhs": lhs, "rhs": rhs})


def check_monotone_ratio(a_seq, b_seq) -> CheckReport:
    """If a_N b_k >= b_N a_k for all k < N (nonnegative terms, b_1 > 0) then
    the partial-sum ratios are nondecreasing."""
    a = np.asarray(a_seq, dtype=np.float64)
    b = np.asarray(b_seq, dtype=np.float64)
    if len(a) != len(b) or len(a) == 0:
        raise PreconditionViolated("sequences must be nonempty and equal length")
    if np.any(a < 0) or np.any(b < 0) or b[0] <= 0:
        raise PreconditionViolated("need nonnegative terms with b_1 > 0")
    hypothesis_ok = all(
        a[n] * b[k] >= b[n] * a[k] - 1e-12 * max(1.0, abs(a[n] * b[k]))
        for n in range(len(a))
        for k in range(n)
    )
    ratios = np.cumsum(a) / np.cumsum(b)
    chain_ok = bool(np.all(np.diff(ratios) >= -1e-12 * np.maximum(1.0, np.abs(ratios[1:]))))
    return CheckReport(
        "monotone-ratio",
        (not hypothesis_ok) or chain_ok,
        precondition_ok=hypothesis_ok,
        detail={"ratios": ratios},
    )


def check_neumann_tail(x_mat, y_mat, k_max: int = 50) -> CheckReport:
    """Partial sums of the inverse's Taylor series about Y converge to X^{-1}
    with an exponentially vanishing tail when X < 2Y (fitted decay rate
    rho < 1 over K = 5..k_max)."""
    x = _as_dense(x_mat)
    y = _as_dense(y_mat)
    y_inv_half = _sym_power(y, -0.5)
    step = np.eye(x.shape[0]) - y_inv_half @ x @ y_inv_half
    radius = float(np.max(np.abs(np.linalg.eigvalsh(step))))
    if radius >= 1.0:
        raise PreconditionViolated(f"spectral radius {radius:.4f} >= 1; series diverges")
    x_inv = np.linalg.inv(x)
    inv_norm = np.linalg.norm(x_inv, 2)
    partial = np.eye(x.shape[0])
    power = np.eye(x.shape[0])
    residuals = []
    for k in range(1, k_max + 1):
        power = power @ step
        partial = partial + power
        if k >= 5:
            resid = np.linalg.norm(y_inv_half @ partial @ y_inv_half - x_inv, 2)
            residuals.append(resid)
    residuals = np.asarray(residuals)
    keep = residuals > 1e-14 * inv_norm
    ks = np.arange(5, k_max + 1)[keep]
    if len(ks) < 2:
        # converged below floating noise almost immediately
        return CheckReport("neumann-tail", True, detail={"rho": 0.0, "radius": radius})
    slope = np.polyfit(ks, np.log(residuals[keep]), 1)[0]
    rho = float(np.exp(slope))
    return CheckReport("neumann-tail", rho < 1.0, detail={"rho": rho, "radius": radius})


# ---------------------------------------------------------------------------
# random ensembles and theorem suites
# ---------------------------------------------------------------------------

def random_spd(rng: np.random.Generator, n: int, eig_low: float = 0.5, eig_high: float = 2.0) -> np.ndarray:
    """Random SPD matrix with eigenvalues uniform in [eig_low, eig_high]."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    vals = rng.uniform(eig_low, eig_high, size=n)
    return (q * vals) @ q.T


def random_bounded_ensemble(
    rng: np.random.Generator,
    n: int,
    outcomes: int = 2,
    alpha: float = 2.0,
    margin: float = 0.9,
) -> tuple[DiscreteEnsemble, np.ndarray]:
    """A discrete ensemble with E[A_s] = A and support strictly inside
    {A_s < alpha * A}.

    Outcomes are A^{1/2}(I + D_i)A^{1/2} with mean-zero symmetric D_i scaled
    so the eigenvalues of every D_i stay within margin * (-1, alpha - 1).
    """
    from .linalg import SpdOperator  # local import to avoid cycle at module load

    a = random_spd(rng, n)
    probs = rng.uniform(0.5, 1.5, size=outcomes)
    probs /= probs.sum()
    deltas = []
    for _ in range(outcomes):
        m = rng.standard_normal((n, n))
        deltas.append((m + m.T) / 2.0)
    mean = sum(p * d for p, d in zip(probs, deltas))
    deltas = [d - mean for d in deltas]
    low = min(float(np.min(np.linalg.eigvalsh(d))) for d in deltas)
    high = max(float(np.max(np.linalg.eigvalsh(d))) for d in deltas)
    scale = margin * min(
        1.0 / abs(low) if low < 0 else np.inf,
        (alpha - 1.0) / high if high > 0 else np.inf,
    )
    a_half = _sym_power(a, 0.5)
    mats = [a_half @ (np.eye(n) + scale * d) @ a_half for d in deltas]
    return DiscreteEnsemble(probs, [SpdOperator((m + m.T) / 2.0) for m in mats]), a


def check_factor_chain(
    ensemble: DiscreteEnsemble,
    truth,
    kind: WindowKind,
    n_max: int = 6,
    l_mat=None,
    tol: float = 1e-10,
) -> CheckReport:
    """Exact truncated factors are nondecreasing in N and bounded by the
    exact optimal factor, which is at most 1."""
    factors = [
        exact_truncated_factor(ensemble, truth, l_mat, order_n=n, kind=kind)
        for n in range(1, n_max + 1)
    ]
    beta_star = exact_beta_energy(ensemble, truth, l_mat)
    chain = np.array(factors + [beta_star])
    ok = (
        factors[0] >= -tol
        and bool(np.all(np.diff(chain) >= -tol))
        and beta_star <= 1.0 + tol
    )
    return CheckReport("factor-chain", ok, detail={"factors": factors, "beta_star": beta_star})
