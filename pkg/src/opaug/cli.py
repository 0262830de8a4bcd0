"""Command-line entry point: benchmarks, lemma verification, and exact-oracle
cross-checks.

Subcommands:
    opaug bench {poisson1d|poisson2d|graph|sparsify} [flags]
    opaug verify lemmas [--seed S] [--instances K] [--ensembles K]
    opaug oracle <case>

Noise mini-grammar: two-point:LOW,HIGH | gamma:MU,SIGMA | bernoulli:KEEP.
Method list grammar: comma-joined tags from
    naive, ag, eag, teag-s:ORDER, teag-h:ORDER, asteag:ORDER
with even ORDER for teag. Report files are written atomically (temp file +
rename).  Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile

import numpy as np

from . import oracle
from .augmentation import HARD, SOFT, AugmentationSpec, Method, shifted
from .errors import ConfigError, OpaugError
from .evaluation import RunConfig, run_benchmark
from .noise import MatrixFamily, make_discrete
from .problems import IncidenceStructure, LaplacianStructure, build_grid_1d

NOISE_TAGS = ("two-point", "gamma", "bernoulli")
METHOD_TAGS = ("naive", "ag", "eag", "teag-s:N", "teag-h:N", "asteag:N")
DEFAULT_METHOD_SPEC = "naive,ag,eag,teag-s:2,teag-s:4,teag-s:6,teag-h:2,teag-h:4,asteag:2,asteag:4,asteag:6"
ORACLE_CASES = ("scalar-two-point", "path3-two-point")

# flag defaults, shared by the CLI and the config-file merge
DEFAULTS = {
    "n": 128, "nx": 32, "ny": 32,
    "edges": "bundled:geometric", "boundary": 6, "gamma": 1.0,
    "noise": "two-point:0.5,1.5", "methods": DEFAULT_METHOD_SPEC,
    "trials": 5000, "samples": 100, "seed": 0,
    "out": None, "format": "csv", "timing": False,
}
CONFIG_KEYS = set(DEFAULTS) | {"threads"}


def parse_noise(text: str) -> tuple:
    """'two-point:0.5,1.5' -> ('two-point', (0.5, 1.5))."""
    tag, _, rest = text.partition(":")
    if tag not in NOISE_TAGS:
        raise ConfigError(f"unknown noise model {tag!r}; choose from {NOISE_TAGS}")
    try:
        params = tuple(float(p) for p in rest.split(",")) if rest else ()
    except ValueError as exc:
        raise ConfigError(f"bad noise parameters {rest!r}: {exc}") from exc
    expected = {"two-point": 2, "gamma": 2, "bernoulli": 1}[tag]
    if len(params) != expected:
        raise ConfigError(f"{tag} noise takes {expected} parameters, got {len(params)}")
    return tag, params


def parse_methods(text: str) -> tuple:
    """'naive,ag,teag-s:4' -> tuple of AugmentationSpec."""
    simple = {"naive": Method.NAIVE, "ag": Method.AG, "eag": Method.EAG}
    ordered = {"teag-s": Method.TEAG_SOFT, "teag-h": Method.TEAG_HARD, "asteag": Method.ASTEAG}
    specs = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        tag, _, order_text = token.partition(":")
        try:
            if tag in simple:
                if order_text:
                    raise ConfigError(f"method {tag!r} takes no order")
                specs.append(AugmentationSpec(simple[tag]))
            elif tag in ordered:
                if not order_text:
                    raise ConfigError(f"method {tag!r} needs an order, e.g. {tag}:2")
                specs.append(AugmentationSpec(ordered[tag], order=int(order_text)))
            else:
                raise ConfigError(f"unknown method {tag!r}; choose from {METHOD_TAGS}")
        except ValueError as exc:
            raise ConfigError(f"method {token!r}: {exc}") from exc
        except OpaugError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"method {token!r}: {exc}") from exc
    if not specs:
        raise ConfigError("empty method list")
    return tuple(specs)


def read_config_file(path: str) -> dict:
    """key = value lines; '#' comments; unknown keys rejected."""
    values = {}
    try:
        with open(path) as handle:
            for lineno, line in enumerate(handle, start=1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                if "=" not in text:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, _, value = text.partition("=")
                key = key.strip()
                if key not in CONFIG_KEYS:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                values[key] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return values


def write_atomic(path: str, content: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".opaug-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opaug",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser(
        "bench",
        help="run a Monte-Carlo benchmark",
        description=(
            f"Noise tags: {', '.join(NOISE_TAGS)} (grammar tag:param,param). "
            f"Method tags: {', '.join(METHOD_TAGS)}."
        ),
    )
    bench.add_argument("problem", choices=["poisson1d", "poisson2d", "graph", "sparsify"])
    bench.add_argument("--n", type=int, help="1D interior grid points (default 128)")
    bench.add_argument("--nx", type=int, help="2D interior width (default 32)")
    bench.add_argument("--ny", type=int, help="2D interior height (default 32)")
    bench.add_argument("--edges", help="edge-list path or bundled:{geometric|attachment}")
    bench.add_argument("--boundary", type=int, help="Dirichlet boundary vertex count (default 6)")
    bench.add_argument("--gamma", type=float, help="diagonal shift for sparsify (default 1.0)")
    bench.add_argument("--noise", help=f"noise spec from {', '.join(NOISE_TAGS)}, e.g. two-point:0.5,1.5")
    bench.add_argument("--methods", help=f"comma list of {', '.join(METHOD_TAGS)}")
    bench.add_argument("--trials", type=int, help="Monte-Carlo trials (default 5000)")
    bench.add_argument("--samples", type=int, help="bootstrap samples per estimate (default 100)")
    bench.add_argument("--seed", type=int, help="master RNG seed (default 0)")
    bench.add_argument("--threads", type=int, help="worker processes (default: OPAUG_THREADS or 1)")
    bench.add_argument("--out", help="output file (default: stdout)")
    bench.add_argument("--format", choices=["csv", "md"], dest="fmt", help="output format (default csv)")
    bench.add_argument("--timing", action="store_const", const=True,
                       help="fill the seconds column (wall time; breaks byte determinism)")
    bench.add_argument("--config", help="key = value config file; flags override")

    verify = sub.add_parser("verify", help="run the randomized lemma and theorem suites")
    verify.add_argument("target", choices=["lemmas"])
    verify.add_argument("--seed", type=int, default=1)
    verify.add_argument("--instances", type=int, default=200, help="instances per lemma suite")
    verify.add_argument("--ensembles", type=int, default=50, help="ensembles per theorem chain")

    orc = sub.add_parser("oracle", help="print exact enumeration values for a case")
    orc.add_argument("case", choices=list(ORACLE_CASES))
    return parser


def _merge_bench_options(args) -> dict:
    """Config-file values overridden by explicitly-passed flags."""
    file_values = read_config_file(args.config) if args.config else {}
    convert = {
        "n": int, "nx": int, "ny": int, "boundary": int, "trials": int,
        "samples": int, "seed": int, "threads": int, "gamma": float,
        "timing": lambda v: v.lower() in ("1", "true", "yes"),
    }
    merged = dict(DEFAULTS)
    merged["threads"] = int(os.environ.get("OPAUG_THREADS", "1"))
    for key, raw in file_values.items():
        try:
            merged[key] = convert.get(key, str)(raw)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc
    flag_map = {"format": "fmt"}
    for key in CONFIG_KEYS:
        flag = getattr(args, flag_map.get(key, key), None)
        if flag is not None:
            merged[key] = flag
    return merged


def _cmd_bench(args) -> int:
    opts = _merge_bench_options(args)
    config = RunConfig(
        problem=args.problem,
        n=opts["n"], nx=opts["nx"], ny=opts["ny"],
        edges=opts["edges"], boundary=opts["boundary"], gamma=opts["gamma"],
        noise=parse_noise(opts["noise"]),
        methods=parse_methods(opts["methods"]),
        trials=opts["trials"], samples=opts["samples"], seed=opts["seed"],
        threads=opts["threads"], timing=bool(opts["timing"]),
    )
    report = run_benchmark(config)
    content = report.to_csv() if opts["format"] == "csv" else report.to_markdown()
    if opts["out"]:
        write_atomic(opts["out"], content)
        print(f"wrote {opts['out']}")
    else:
        sys.stdout.write(content)
    return 0


def _cmd_verify(args) -> int:
    rng = np.random.default_rng(args.seed)
    failures = 0

    def emit(name, ok, detail=""):
        nonlocal failures
        print(f"{'pass' if ok else 'FAIL'}  {name}{'  (' + detail + ')' if detail else ''}")
        failures += 0 if ok else 1

    ok = True
    for _ in range(args.ensembles):
        ens, truth = oracle.random_bounded_ensemble(rng, int(rng.integers(1, 7)), outcomes=3)
        ok &= oracle.check_factor_chain(ens, truth, SOFT).passed
    emit("soft-window chain (monotone, bounded by beta*)", ok, f"{args.ensembles} ensembles")

    ok = True
    for _ in range(args.ensembles):
        alpha = float(rng.uniform(1.5, 4.0))
        ens, truth = oracle.random_bounded_ensemble(rng, int(rng.integers(1, 7)), outcomes=3, alpha=alpha)
        ok &= oracle.check_factor_chain(ens, truth, shifted(alpha)).passed
    emit("shifted chain (monotone, bounded by beta*)", ok, f"{args.ensembles} ensembles")

    ok = True
    for _ in range(args.instances):
        ens, truth = oracle.random_bounded_ensemble(rng, int(rng.integers(1, 7)), outcomes=3)
        ok &= oracle.check_loewner(ens, truth).passed
    emit("Loewner-order inversion", ok, f"{args.instances} ensembles")

    ok = True
    for _ in range(args.instances):
        n = int(rng.integers(2, 5))
        mats = [oracle.random_spd(rng, n, 0.1, 2.0) for _ in range(int(rng.integers(2, 4)))]
        s = rng.standard_normal((n, n))
        j = int(rng.integers(1, 4))
        k = j + int(rng.integers(0, 3))
        r = int(rng.integers(0, j + 1))
        ok &= oracle.check_trace_inequality(mats, s, j, k, r).passed
    emit("trace power inequality", ok, f"{args.instances} draws")

    ok = True
    for _ in range(args.instances):
        length = int(rng.integers(2, 12))
        b = rng.uniform(0.1, 1.0, size=length)
        c = np.sort(rng.uniform(0.0, 1.0, size=length))
        ok &= oracle.check_monotone_ratio(c * b, b).passed
    emit("monotone sum-ratio lemma", ok, f"{args.instances} sequences")

    ok = True
    for _ in range(args.instances):
        n = int(rng.integers(2, 6))
        y = oracle.random_spd(rng, n)
        radius = float(rng.uniform(0.3, 0.9))
        d = rng.standard_normal((n, n))
        d = (d + d.T) / 2.0
        d *= radius / max(abs(np.linalg.eigvalsh(d)))
        y_half = oracle._sym_power(y, 0.5)
        x = y_half @ (np.eye(n) - d) @ y_half
        ok &= oracle.check_neumann_tail((x + x.T) / 2.0, y).passed
    emit("Neumann tail decay", ok, f"{args.instances} pairs")

    return 1 if failures else 0


def _scalar_two_point():
    inc = IncidenceStructure(2, np.array([[0, 1]]), np.array([1]))
    structure = LaplacianStructure(inc, gamma=0.0)
    family = MatrixFamily.two_point(structure, 0.5, 1.5)
    return make_discrete(family, np.ones(1)), structure.assemble(np.ones(1))


def _path3_two_point():
    inst = build_grid_1d(3)
    family = MatrixFamily.two_point(inst.structure, 0.5, 1.5)
    return make_discrete(family, inst.weights), inst.operator


def _cmd_oracle(args) -> int:
    ensemble, truth = _scalar_two_point() if args.case == "scalar-two-point" else _path3_two_point()
    beta_star_energy = oracle.exact_beta_energy(ensemble, truth)
    beta_star_ag, beta_bound_ag = oracle.exact_beta_ag(ensemble, truth)
    print(f"case: {args.case} ({len(ensemble)} outcomes, n={ensemble.n})")
    print(f"beta* (energy)         = {beta_star_energy:.12g}")
    print(f"beta* (AG)             = {beta_star_ag:.12g}")
    print(f"beta  (AG/basic bound) = {beta_bound_ag:.12g}")
    soft = [oracle.exact_truncated_factor(ensemble, truth, order_n=n, kind=SOFT) for n in range(1, 7)]
    hard = [oracle.exact_truncated_factor(ensemble, truth, order_n=n, kind=HARD) for n in range(1, 4)]
    print("soft chain (N=1..6)    = " + ", ".join(f"{b:.10g}" for b in soft))
    print("hard chain (N=1..3)    = " + ", ".join(f"{b:.10g}" for b in hard))
    accel = [oracle.exact_accel_factor(ensemble, truth, order_n=n) for n in (2, 4, 8, 16)]
    print("accel chain (N=2,4,8,16) = " + ", ".join(f"{b:.10g}" for b in accel))
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "bench":
            return _cmd_bench(args)
        if args.command == "verify":
            return _cmd_verify(args)
        return _cmd_oracle(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OpaugError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
