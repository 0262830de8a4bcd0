"""Monte-Carlo benchmark harness: paired trials over (observation, rhs)
draws, ratio-of-sums error aggregation with delta-method 2-sigma half-widths,
and deterministic CSV/markdown reports.

Determinism contract: trial t draws from default_rng([seed, t]) in a fixed
order, results are collected by trial index, and aggregation is vectorized
over index-ordered arrays, so reports are byte-identical for a fixed config
and seed regardless of worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import multiprocessing as mp
import numpy as np

from .augmentation import (
    AugmentationSpec,
    Method,
    _ratio_estimate,
    _solve_per_sample,
    augmented_solve,
    series_terms_batch,
    window_weights,
)
from .errors import ConfigError, InsufficientTrials, OpaugError
from .linalg import ProbeCorrelation, factorize, generalized_spectral_norm_batch
from .problems import (
    ProblemInstance,
    build_grid_1d,
    build_grid_2d,
    bundled_graph,
    load_edge_list,
    select_boundary,
    shifted_instance,
)

DEFAULT_METHODS = (
    AugmentationSpec(Method.NAIVE),
    AugmentationSpec(Method.AG),
    AugmentationSpec(Method.EAG),
    AugmentationSpec(Method.TEAG_SOFT, order=2),
    AugmentationSpec(Method.TEAG_SOFT, order=4),
    AugmentationSpec(Method.TEAG_SOFT, order=6),
    AugmentationSpec(Method.TEAG_HARD, order=2),
    AugmentationSpec(Method.TEAG_HARD, order=4),
    AugmentationSpec(Method.ASTEAG, order=2),
    AugmentationSpec(Method.ASTEAG, order=4),
    AugmentationSpec(Method.ASTEAG, order=6),
)

PROBLEMS = ("poisson1d", "poisson2d", "graph", "sparsify")


@dataclass(frozen=True)
class RunConfig:
    """A fully-determined benchmark run; validated before any computation."""

    problem: str
    n: int = 128
    nx: int = 32
    ny: int = 32
    edges: str = "bundled:geometric"
    boundary: int = 6
    gamma: float = 1.0
    noise: tuple = ("two-point", (0.5, 1.5))
    methods: tuple = DEFAULT_METHODS
    trials: int = 5000
    samples: int = 100
    seed: int = 0
    threads: int = 1
    timing: bool = False

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {PROBLEMS}")
        if self.trials < 2:
            raise ConfigError(f"need at least 2 trials, got {self.trials}")
        if self.samples < 1:
            raise ConfigError(f"need at least 1 bootstrap sample, got {self.samples}")
        if self.threads < 1:
            raise ConfigError(f"thread cap must be >= 1, got {self.threads}")
        if not self.methods:
            raise ConfigError("no methods requested")
        tags = [method_label(s) for s in self.methods]
        if len(set(tags)) != len(tags):
            raise ConfigError(f"duplicate method rows requested: {tags}")
        tag, params = self.noise
        if tag not in ("two-point", "gamma", "bernoulli"):
            raise ConfigError(f"unknown noise model {tag!r}")


def method_label(spec: AugmentationSpec) -> tuple[str, int | None, str]:
    """(method, order, window) row label for a method spec."""
    if spec.method is Method.TEAG_SOFT:
        return ("teag", spec.order, "soft")
    if spec.method is Method.TEAG_HARD:
        return ("teag", spec.order, "hard")
    if spec.method is Method.ASTEAG:
        return ("asteag", spec.order, "")
    return (spec.method.value, None, "")


def build_instance(config: RunConfig) -> ProblemInstance:
    """Construct the benchmark problem for a config, noise family attached."""
    tag, params = config.noise
    if config.problem == "poisson1d":
        inst = build_grid_1d(config.n)
    elif config.problem == "poisson2d":
        inst = build_grid_2d(config.nx, config.ny)
    else:
        if config.edges.startswith("bundled:"):
            inc, weights = bundled_graph(config.edges.split(":", 1)[1])
        else:
            inc, weights = load_edge_list(config.edges)
        if config.problem == "graph":
            inc = select_boundary(inc, config.boundary, seed=config.seed)
            inst = ProblemInstance(inc, weights, label=f"graph({config.edges})")
        else:
            inst = shifted_instance(inc, weights, config.gamma, label=f"sparsify({config.edges})")
    return inst.with_noise(tag, *params)


@dataclass
class TrialResult:
    """Squared errors of one paired trial, per method, plus shared references."""

    labels: list
    l2_errors: np.ndarray
    energy_errors: np.ndarray
    l2_ref: float
    energy_ref: float


class TrialEngine:
    """Shared-state executor for one benchmark problem.

    All methods in a trial see the same (A_hat, b) pair and share the
    bootstrap sample set; energy methods share one probe stream, AG draws
    its own two.  Per-trial RNGs are caller-supplied, so trial results are
    independent of execution order.
    """

    def __init__(self, instance: ProblemInstance, specs, samples: int):
        if instance.family is None:
            raise ConfigError("instance has no noise family attached")
        self.instance = instance
        self.family = instance.family
        self.structure = instance.structure
        self.specs = list(specs)
        self.samples = samples
        self.truth = instance.operator
        self.truth_fact = self.truth.factorization()
        self.n = instance.n

        if any(s.R is not None or s.B is not None or s.C is not None for s in self.specs):
            raise ConfigError("benchmark runs support identity R/B/C only")
        methods = [s.method for s in self.specs]
        self.need_boot = any(m is not Method.NAIVE for m in methods)
        self.fact_idx = [i for i, m in enumerate(methods) if m in (Method.AG, Method.EAG)]
        self.ag_specs = [s for s in self.specs if s.method is Method.AG]
        self.eag_specs = [s for s in self.specs if s.method is Method.EAG]
        self.teag_idx = [i for i, m in enumerate(methods) if m in (Method.TEAG_SOFT, Method.TEAG_HARD)]
        self.ast_idx = [i for i, m in enumerate(methods) if m is Method.ASTEAG]
        self.series_k = max((2 * self.specs[i].window_n for i in self.teag_idx), default=0)
        self.ast_n = max((self.specs[i].window_n for i in self.ast_idx), default=0)
        self.energy_corr = ProbeCorrelation.identity(self.n)

    def run(self, rng: np.random.Generator) -> TrialResult:
        inst = self.instance
        fam = self.family
        timings = np.zeros(len(self.specs))

        # fixed draw order: observation, rhs, bootstrap weights, AG probes,
        # energy probes, power-method starts
        z = fam.draw_multipliers(rng, fam.edge_count)
        omega_hat = z * inst.weights
        op_hat = self.structure.assemble(omega_hat)
        fact_hat = factorize(op_hat)
        b = rng.standard_normal(self.n)
        x_true = self.truth_fact.solve(b)
        l2_ref = float(x_true @ x_true)
        energy_ref = float(x_true @ self.truth.dot(x_true))

        boot_weights = None
        if self.need_boot:
            boot_weights = fam.bootstrap_weights(omega_hat, rng, self.samples)
        q_ag = p_ag = None
        if self.ag_specs:
            q_ag = rng.standard_normal((self.n, self.samples))
            p_ag = rng.standard_normal((self.n, self.samples))
        q_energy = None
        if self.eag_specs or self.teag_idx or self.ast_idx:
            q_energy = self.energy_corr.sample_block(rng, self.samples)
        power_starts = None
        if self.ast_idx:
            power_starts = rng.standard_normal((self.n, self.samples))

        # shared bootstrap factorization solves (AG and EAG)
        ag_u = ag_t = eag_u = None
        if self.fact_idx:
            t0 = time.perf_counter()
            cols = []
            if self.ag_specs:
                cols.extend([q_ag.T[:, :, None], p_ag.T[:, :, None]])
            if self.eag_specs:
                cols.append(q_energy.T[:, :, None])
            sols = _solve_per_sample(self.structure, boot_weights, np.concatenate(cols, axis=2))
            pos = 0
            if self.ag_specs:
                ag_u = sols[:, :, 0].T
                ag_t = sols[:, :, 1].T
                pos = 2
            if self.eag_specs:
                eag_u = sols[:, :, pos].T
            shared = (time.perf_counter() - t0) / len(self.fact_idx)
            timings[self.fact_idx] += shared

        apply_boot = None
        if self.teag_idx or self.ast_idx:
            apply_boot = lambda v: self.structure.apply_weighted(boot_weights, v)

        teag_terms = None
        if self.teag_idx:
            t0 = time.perf_counter()
            teag_terms = series_terms_batch(fact_hat, apply_boot, q_energy, self.series_k)
            shared = (time.perf_counter() - t0) / len(self.teag_idx)
            timings[self.teag_idx] += shared

        alphas = ast_terms = None
        if self.ast_idx:
            t0 = time.perf_counter()
            first_ast = self.specs[self.ast_idx[0]]
            raw, _ = generalized_spectral_norm_batch(
                apply_boot,
                fact_hat,
                power_starts,
                tol=first_ast.power_tol,
                max_iter=first_ast.power_max_iter,
            )
            alphas = np.maximum(1.0, raw)
            ast_terms = series_terms_batch(fact_hat, apply_boot, q_energy, self.ast_n, alphas)
            shared = (time.perf_counter() - t0) / len(self.ast_idx)
            timings[self.ast_idx] += shared

        l2_errors = np.empty(len(self.specs))
        energy_errors = np.empty(len(self.specs))
        for idx, spec in enumerate(self.specs):
            t0 = time.perf_counter()
            try:
                beta = self._beta(spec, fact_hat, op_hat, q_ag, p_ag, ag_u, ag_t,
                                  q_energy, eag_u, teag_terms, ast_terms, alphas)
                x_tilde = augmented_solve(fact_hat, spec.method, beta, b)
            except OpaugError as exc:
                raise type(exc)(f"{method_label(spec)}: {exc}") from exc
            diff = x_tilde - x_true
            l2_errors[idx] = diff @ diff
            energy_errors[idx] = diff @ self.truth.dot(diff)
            timings[idx] += time.perf_counter() - t0
        return TrialResult([method_label(s) for s in self.specs], l2_errors, energy_errors,
                           l2_ref, energy_ref), timings

    def _beta(self, spec, fact_hat, op_hat, q_ag, p_ag, ag_u, ag_t,
              q_energy, eag_u, teag_terms, ast_terms, alphas) -> float:
        if spec.method is Method.NAIVE:
            return 0.0
        if spec.method is Method.AG:
            base_q = fact_hat.solve(q_ag)
            num = np.einsum("ij,ij->j", ag_u, ag_u) - np.einsum("ij,ij->j", ag_u, base_q)
            den = np.einsum("ij,ij->j", ag_t, ag_t)
            return _ratio_estimate(num, den, clamp=False).beta
        if spec.method is Method.EAG:
            quad = np.einsum("ij,ij->j", eag_u, op_hat.dot(eag_u))
            cross = np.einsum("ij,ij->j", q_energy, eag_u)
            return _ratio_estimate(quad - cross, quad, clamp=True).beta
        if spec.method in (Method.TEAG_SOFT, Method.TEAG_HARD):
            w_num, w_den = window_weights(spec.window_kind, spec.window_n)
            terms = teag_terms[:, : len(w_num)]
            return _ratio_estimate(terms @ w_num, terms @ w_den, clamp=True).beta
        # AST-EAG
        n_ord = spec.window_n
        terms = ast_terms[:, : n_ord + 1]
        k = np.arange(n_ord + 1, dtype=np.float64)
        eta = (1.0 - 1.0 / alphas)[:, None]
        w_num = (k + 1.0) - (1.0 - eta ** (n_ord - k + 1.0)) / (1.0 - eta)
        scale = alphas**-2.0
        num = scale * np.einsum("ik,ik->i", w_num, terms)
        den = scale * (terms @ (k + 1.0))
        return _ratio_estimate(num, den, clamp=True).beta


def run_trial(instance: ProblemInstance, methods, samples: int, rng: np.random.Generator) -> TrialResult:
    """One paired trial: a single (A_hat, b) draw evaluated by every method."""
    engine = TrialEngine(instance, methods, samples)
    return engine.run(rng)[0]


@dataclass
class BenchmarkRow:
    method: str
    order: int | None
    window: str
    r_mse: float
    r_mse_2sigma: float
    r_emse: float
    r_emse_2sigma: float
    seconds: float | None = None


@dataclass
class BenchmarkReport:
    rows: list
    problem: str = ""
    noise: str = ""
    trials: int = 0
    samples: int = 0
    seed: int = 0
    timing: bool = False

    def row(self, method: str, order: int | None = None, window: str = "") -> BenchmarkRow:
        for r in self.rows:
            if (r.method, r.order, r.window) == (method, order, window):
                return r
        raise KeyError(f"no row ({method}, {order}, {window})")

    def to_csv(self) -> str:
        lines = ["method,order,window,r_mse,r_mse_2sigma,r_emse,r_emse_2sigma,seconds"]
        for r in self.rows:
            order = "" if r.order is None else str(r.order)
            seconds = "" if (not self.timing or r.seconds is None) else format(r.seconds, ".3f")
            vals = ",".join(format(v, ".10g") for v in (r.r_mse, r.r_mse_2sigma, r.r_emse, r.r_emse_2sigma))
            lines.append(f"{r.method},{order},{r.window},{vals},{seconds}")
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        head = "| Method | Order | Window | R. MSE | +-2s | R. EMSE | +-2s |"
        sep = "|---|---|---|---|---|---|---|"
        if self.timing:
            head += " Seconds |"
            sep += "---|"
        lines = [
            f"**{self.problem}** noise={self.noise} trials={self.trials} "
            f"samples={self.samples} seed={self.seed}",
            "",
            head,
            sep,
        ]
        for r in self.rows:
            order = "-" if r.order is None else str(r.order)
            window = r.window or "-"
            cells = [
                r.method,
                order,
                window,
                f"{100 * r.r_mse:.3g}%",
                f"{100 * r.r_mse_2sigma:.3g}%",
                f"{100 * r.r_emse:.3g}%",
                f"{100 * r.r_emse_2sigma:.3g}%",
            ]
            if self.timing:
                cells.append("-" if r.seconds is None else f"{r.seconds:.2f}")
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def _ratio_with_2sigma(errors: np.ndarray, refs: np.ndarray) -> tuple[float, float]:
    """Ratio-of-sums estimate with first-order delta-method 2-sigma."""
    total_err = errors.sum()
    total_ref = refs.sum()
    ratio = total_err / total_ref
    count = len(errors)
    resid = errors - ratio * refs
    half = 2.0 * np.sqrt(np.mean(resid**2) / count) / abs(total_ref / count)
    return float(ratio), float(half)


def aggregate(trial_results, **metadata) -> BenchmarkReport:
    """Fold per-trial results into a report, in first-trial label order."""
    trial_results = list(trial_results)
    if len(trial_results) < 2:
        raise InsufficientTrials(f"need at least 2 trials, got {len(trial_results)}")
    labels = trial_results[0].labels
    l2_err = np.array([t.l2_errors for t in trial_results])
    e_err = np.array([t.energy_errors for t in trial_results])
    l2_ref = np.array([t.l2_ref for t in trial_results])
    e_ref = np.array([t.energy_ref for t in trial_results])
    seconds = metadata.pop("seconds", None)
    rows = []
    for j, (method, order, windowtag) in enumerate(labels):
        r_mse, r_mse_2s = _ratio_with_2sigma(l2_err[:, j], l2_ref)
        r_emse, r_emse_2s = _ratio_with_2sigma(e_err[:, j], e_ref)
        sec = None if seconds is None else float(seconds[j])
        rows.append(BenchmarkRow(method, order, windowtag, r_mse, r_mse_2s, r_emse, r_emse_2s, sec))
    return BenchmarkReport(rows, **metadata)


_WORKER_ENGINE = None
_WORKER_SEED = None


def _worker_init(config: RunConfig):
    global _WORKER_ENGINE, _WORKER_SEED
    instance = build_instance(config)
    _WORKER_ENGINE = TrialEngine(instance, config.methods, config.samples)
    _WORKER_SEED = config.seed


def _worker_run(index_range) -> tuple[int, list, np.ndarray]:
    start, stop = index_range
    out = []
    timing = None
    for t in range(start, stop):
        result, secs = _WORKER_ENGINE.run(np.random.default_rng([_WORKER_SEED, t]))
        timing = secs if timing is None else timing + secs
        out.append(result)
    return start, out, timing


def run_benchmark(config: RunConfig) -> BenchmarkReport:
    """Run a configured benchmark; deterministic for fixed config and seed
    regardless of thread count."""
    tag, params = config.noise
    noise_label = f"{tag}:{','.join(format(p, 'g') for p in params)}"
    instance = build_instance(config)
    timing_total = np.zeros(len(config.methods))
    if config.threads == 1:
        engine = TrialEngine(instance, config.methods, config.samples)
        results = []
        for t in range(config.trials):
            result, secs = engine.run(np.random.default_rng([config.seed, t]))
            results.append(result)
            timing_total += secs
    else:
        chunk = max(1, config.trials // (config.threads * 8))
        ranges = [(s, min(s + chunk, config.trials)) for s in range(0, config.trials, chunk)]
        results = [None] * config.trials
        # fork: workers must not re-import __main__ (results are index-keyed,
        # so scheduling cannot affect the aggregate)
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(
            max_workers=config.threads, mp_context=ctx,
            initializer=_worker_init, initargs=(config,),
        ) as pool:
            for start, chunk_results, secs in pool.map(_worker_run, ranges):
                timing_total += secs
                for offset, result in enumerate(chunk_results):
                    results[start + offset] = result
    return aggregate(
        results,
        problem=instance.label,
        noise=noise_label,
        trials=config.trials,
        samples=config.samples,
        seed=config.seed,
        timing=config.timing,
        seconds=timing_total,
    )
