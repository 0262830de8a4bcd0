"""Benchmark problem construction: 1D/2D Poisson grids with Dirichlet
conditions, edge-list graph Laplacians with a small Dirichlet boundary, and
gamma-shifted Laplacians for sparsification.

Operators are assembled positive definite as (E diag(w) E^T) restricted to
the interior vertex set, plus gamma*I.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import scipy.sparse as sp

from .errors import (
    CannotStabilize,
    EmptyGraph,
    InvalidShift,
    InvalidSize,
    NotPositiveDefinite,
    ParseError,
    SelfLoop,
    StructureMismatch,
)
from .linalg import SpdOperator, factorize
from .noise import MatrixFamily, NoiseModel

DENSE_CUTOFF = 400  # interior size above which operators are assembled sparse


@dataclass(frozen=True)
class IncidenceStructure:
    """A vertex set, an oriented edge list, and a Dirichlet boundary split."""

    n_vertices: int
    edges: np.ndarray  # (E, 2) int, arbitrary fixed orientation
    boundary: np.ndarray  # vertex ids, possibly empty

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        boundary = np.asarray(self.boundary, dtype=np.int64)
        if edges.size and (edges.min() < 0 or edges.max() >= self.n_vertices):
            raise ValueError("edge endpoint out of range")
        if boundary.size and (boundary.min() < 0 or boundary.max() >= self.n_vertices):
            raise ValueError("boundary vertex out of range")
        if len(np.unique(boundary)) != len(boundary):
            raise ValueError("boundary vertices must be distinct")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "boundary", np.sort(boundary))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def interior(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.boundary] = False
        return np.flatnonzero(mask)

    def with_boundary(self, boundary) -> "IncidenceStructure":
        return IncidenceStructure(self.n_vertices, self.edges, np.asarray(boundary, dtype=np.int64))


class LaplacianStructure:
    """Maps per-edge weights to the interior Dirichlet minor of E W E^T + gamma*I.

    Precomputes the signed incidence matrix and assembly index templates so
    that repeated assembly and batched weighted matrix-vector products are
    cheap.  Operators come out dense below DENSE_CUTOFF interior vertices
    and sparse CSR above.
    """

    def __init__(self, incidence: IncidenceStructure, gamma: float = 0.0, dense: bool | None = None):
        if gamma < 0:
            raise InvalidShift(f"gamma must be nonnegative, got {gamma}")
        if gamma == 0.0 and len(incidence.boundary) == 0:
            raise InvalidShift("gamma = 0 with an empty boundary yields a singular operator")
        self.incidence = incidence
        self.gamma = float(gamma)
        self.interior = incidence.interior
        self.n = len(self.interior)
        self.dense = (self.n <= DENSE_CUTOFF) if dense is None else bool(dense)

        nv = incidence.n_vertices
        ne = incidence.edge_count
        eu, ev = incidence.edges[:, 0], incidence.edges[:, 1]
        self._inc = sp.csr_array(
            (
                np.concatenate([np.ones(ne), -np.ones(ne)]),
                (np.concatenate([eu, ev]), np.concatenate([np.arange(ne), np.arange(ne)])),
            ),
            shape=(nv, ne),
        )
        # map global vertex id -> interior index (-1 on boundary)
        to_int = np.full(nv, -1, dtype=np.int64)
        to_int[self.interior] = np.arange(self.n)
        self._to_int = to_int
        iu, iv = to_int[eu], to_int[ev]
        rows, cols, sign, eidx = [], [], [], []
        for e in range(ne):
            if iu[e] >= 0:
                rows.append(iu[e]); cols.append(iu[e]); sign.append(1.0); eidx.append(e)
            if iv[e] >= 0:
                rows.append(iv[e]); cols.append(iv[e]); sign.append(1.0); eidx.append(e)
            if iu[e] >= 0 and iv[e] >= 0:
                rows.extend([iu[e], iv[e]]); cols.extend([iv[e], iu[e]])
                sign.extend([-1.0, -1.0]); eidx.extend([e, e])
        self._rows = np.asarray(rows, dtype=np.int64)
        self._cols = np.asarray(cols, dtype=np.int64)
        self._sign = np.asarray(sign)
        self._eidx = np.asarray(eidx, dtype=np.int64)

    @property
    def edge_count(self) -> int:
        return self.incidence.edge_count

    def _entries(self, weights: np.ndarray) -> np.ndarray:
        return self._sign * weights[self._eidx]

    def assemble(self, weights) -> SpdOperator:
        """The operator for one weight vector."""
        weights = self._check_weights(weights)
        if self.dense:
            m = np.zeros((self.n, self.n))
            np.add.at(m, (self._rows, self._cols), self._entries(weights))
            if self.gamma:
                m[np.diag_indices(self.n)] += self.gamma
            return SpdOperator(m)
        diag = np.arange(self.n)
        data = np.concatenate([self._entries(weights), np.full(self.n, self.gamma)])
        rows = np.concatenate([self._rows, diag])
        cols = np.concatenate([self._cols, diag])
        m = sp.csr_array((data, (rows, cols)), shape=(self.n, self.n))
        return SpdOperator(m)

    def assemble_batch(self, weight_cols: np.ndarray) -> np.ndarray:
        """Dense stacked assembly: (E, M) weight columns -> (M, n, n)."""
        m_count = weight_cols.shape[1]
        out = np.zeros((m_count, self.n, self.n))
        vals = self._sign[None, :] * weight_cols[self._eidx, :].T  # (M, entries)
        np.add.at(out, (slice(None), self._rows, self._cols), vals)
        if self.gamma:
            out[:, np.arange(self.n), np.arange(self.n)] += self.gamma
        return out

    def apply_weighted(self, weight_cols: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Column-wise operator application: column i of the result is the
        operator assembled from weight_cols[:, i] applied to v[:, i]."""
        full = np.zeros((self.incidence.n_vertices, v.shape[1]))
        full[self.interior] = v
        d = self._inc.T @ full
        out = (self._inc @ (weight_cols * d))[self.interior]
        if self.gamma:
            out += self.gamma * v
        return out

    def _check_weights(self, weights) -> np.ndarray:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (self.edge_count,):
            raise StructureMismatch(
                f"weight vector has shape {weights.shape}, structure has {self.edge_count} edges"
            )
        return weights


@dataclass
class ProblemInstance:
    """A benchmark problem: structure, ground-truth weights, noise family.

    The right-hand-side prior is the standard normal distribution throughout.
    """

    incidence: IncidenceStructure
    weights: np.ndarray
    gamma: float = 0.0
    label: str = ""
    family: MatrixFamily | None = None
    _structure: LaplacianStructure = field(default=None, repr=False)
    _operator: SpdOperator = field(default=None, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if np.any(self.weights <= 0):
            raise ValueError("ground-truth weights must be positive")

    @property
    def structure(self) -> LaplacianStructure:
        if self._structure is None:
            self._structure = LaplacianStructure(self.incidence, self.gamma)
        return self._structure

    @property
    def n(self) -> int:
        return self.structure.n

    @property
    def operator(self) -> SpdOperator:
        """Ground truth A = M(omega*); factorization cached on the operator."""
        if self._operator is None:
            self._operator = self.structure.assemble(self.weights)
        return self._operator

    def with_noise(self, model, *params) -> "ProblemInstance":
        """Attach a noise family ('two-point', low, high / 'gamma', mu, sigma /
        'bernoulli', keep)."""
        tag = NoiseModel(model) if not isinstance(model, NoiseModel) else model
        if tag is NoiseModel.TWO_POINT:
            family = MatrixFamily.two_point(self.structure, *params)
        elif tag is NoiseModel.GAMMA:
            family = MatrixFamily.gamma(self.structure, *params)
        else:
            family = MatrixFamily.bernoulli(self.structure, *params)
        self.family = family
        return self


def build_grid_1d(n_interior: int) -> ProblemInstance:
    """Path graph on n_interior + 2 vertices with the two endpoints as the
    Dirichlet boundary and unit true weights.  The unit-weight interior
    operator is tridiag(-1, 2, -1)."""
    if n_interior < 1:
        raise InvalidSize(f"need at least one interior vertex, got {n_interior}")
    nv = n_interior + 2
    edges = np.column_stack([np.arange(nv - 1), np.arange(1, nv)])
    inc = IncidenceStructure(nv, edges, np.array([0, nv - 1]))
    return ProblemInstance(inc, np.ones(nv - 1), label=f"poisson1d(n={n_interior})")


def build_grid_2d(nx: int, ny: int) -> ProblemInstance:
    """5-point-stencil grid with an (nx x ny) interior and the full outer
    ring as the Dirichlet boundary; unit true weights."""
    if nx < 1 or ny < 1:
        raise InvalidSize(f"grid must be at least 1x1, got {nx}x{ny}")
    wx, wy = nx + 2, ny + 2
    vid = lambda i, j: i * wy + j
    edges = []
    for i in range(wx):
        for j in range(wy):
            if i + 1 < wx:
                edges.append((vid(i, j), vid(i + 1, j)))
            if j + 1 < wy:
                edges.append((vid(i, j), vid(i, j + 1)))
    boundary = [
        vid(i, j)
        for i in range(wx)
        for j in range(wy)
        if i in (0, wx - 1) or j in (0, wy - 1)
    ]
    inc = IncidenceStructure(wx * wy, np.asarray(edges), np.asarray(boundary))
    return ProblemInstance(inc, np.ones(len(edges)), label=f"poisson2d({nx}x{ny})")


def load_edge_list(path) -> tuple[IncidenceStructure, np.ndarray]:
    """Parse a text edge list of lines "u v [w]".

    Whitespace or comma separators; lines starting with '%' or '#' are
    skipped; 1-indexed files (minimum vertex id 1) are shifted down; a
    missing weight defaults to 1.0; duplicate edges are merged by weight
    summation; self-loops are rejected.  The returned structure has an empty
    boundary (apply select_boundary or a gamma shift downstream).
    """
    raw = []
    with open(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.strip()
            if not text or text.startswith("%") or text.startswith("#"):
                continue
            parts = text.replace(",", " ").split()
            if len(parts) not in (2, 3):
                raise ParseError(f"line {lineno}: expected 'u v [w]', got {text!r}", lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}", lineno) from exc
            if u == v:
                raise SelfLoop(f"line {lineno}: self-loop at vertex {u}", lineno)
            if w <= 0:
                raise ParseError(f"line {lineno}: weight must be positive, got {w}", lineno)
            raw.append((u, v, w))
    if not raw:
        raise EmptyGraph(f"no edges found in {path}")
    ids = np.array([[u, v] for u, v, _ in raw], dtype=np.int64)
    offset = ids.min()
    if offset not in (0, 1):
        raise ParseError(f"minimum vertex id is {offset}; expected 0- or 1-indexed")
    ids -= offset
    merged: dict[tuple[int, int], float] = {}
    for (u, v), (_, _, w) in zip(ids, raw):
        key = (min(u, v), max(u, v))
        merged[key] = merged.get(key, 0.0) + w
    keys = sorted(merged)
    edges = np.asarray(keys, dtype=np.int64)
    weights = np.asarray([merged[k] for k in keys])
    inc = IncidenceStructure(int(ids.max()) + 1, edges, np.array([], dtype=np.int64))
    return inc, weights


def bundled_graph(name: str) -> tuple[IncidenceStructure, np.ndarray]:
    """One of the packaged synthetic test graphs: 'geometric' (random
    geometric, ~200 vertices) or 'attachment' (preferential attachment,
    ~300 vertices)."""
    files = {"geometric": "geometric_200.txt", "attachment": "attachment_300.txt"}
    if name not in files:
        raise ValueError(f"unknown bundled graph {name!r}; choose from {sorted(files)}")
    ref = resources.files("opaug.data").joinpath(files[name])
    with resources.as_file(ref) as path:
        return load_edge_list(path)


def select_boundary(structure: IncidenceStructure, count: int = 6, seed: int = 0) -> IncidenceStructure:
    """Seeded uniform draw of `count` Dirichlet boundary vertices such that
    the unit-weight interior minor stays SPD; re-draws up to 100 times."""
    if count >= structure.n_vertices:
        raise ValueError(f"boundary count {count} must be below {structure.n_vertices} vertices")
    if count == 0:
        return structure.with_boundary(np.array([], dtype=np.int64))
    rng = np.random.default_rng(seed)
    for _ in range(100):
        pick = rng.choice(structure.n_vertices, size=count, replace=False)
        candidate = structure.with_boundary(pick)
        try:
            lap = LaplacianStructure(candidate, gamma=0.0)
            factorize(lap.assemble(np.ones(structure.edge_count)))
        except NotPositiveDefinite:
            continue
        return candidate
    raise CannotStabilize(f"no SPD minor found in 100 draws with {count} boundary vertices")


def shifted_instance(structure: IncidenceStructure, weights, gamma: float, label: str = "") -> ProblemInstance:
    """The full-Laplacian problem L + gamma*I with no boundary removal."""
    if gamma <= 0:
        raise InvalidShift(f"gamma must be positive with an empty boundary, got {gamma}")
    inc = structure.with_boundary(np.array([], dtype=np.int64))
    return ProblemInstance(inc, weights, gamma=gamma, label=label or f"shifted(gamma={gamma})")
