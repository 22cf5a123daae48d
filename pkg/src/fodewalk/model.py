"""Problem definitions, validation and the two experiment families.

Indices are 0-based throughout the Python API. The JSON problem format and
the CLI use 1-based rows and columns, converted at the I/O boundary.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy import sparse

from fodewalk.errors import (
    AlphaOutOfRange,
    PositiveDiagonalInSimplifiedMode,
    ProblemError,
    RobinDenominatorZero,
    ZeroDiagonal,
)
from fodewalk.rng import RngStream

Mode = Literal["simplified", "general"]
MODES = ("simplified", "general")


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FodeProblem:
    """The system ``D^alpha_i u_i = (A u)_i``, ``u(0) = u0``, observed at ``u_start(T)``.

    ``A`` is held as a diagonal vector plus the off-diagonal part in CSR
    form (``indptr``, ``indices``, ``data``; columns sorted within each row,
    explicit zeros removed).
    """

    diag: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    alpha: np.ndarray
    u0: np.ndarray
    T: float
    start_node: int = 0

    @property
    def n(self) -> int:
        return len(self.diag)

    @property
    def nnz_offdiag(self) -> int:
        return len(self.data)

    @classmethod
    def from_dense(cls, A, alpha, u0, T: float, start_node: int = 0) -> "FodeProblem":
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ProblemError(f"A must be square, got shape {A.shape}")
        off = A.copy()
        np.fill_diagonal(off, 0.0)
        return cls._build(np.diag(A), sparse.csr_matrix(off), alpha, u0, T, start_node)

    @classmethod
    def from_triplets(
        cls, n: int, triplets: Iterable[Sequence[float]], alpha, u0, T: float, start_node: int = 0
    ) -> "FodeProblem":
        """Build from ``(row, col, value)`` triples with 0-based indices."""
        rows, cols, vals = [], [], []
        seen = set()
        for r, c, v in triplets:
            r, c = int(r), int(c)
            if not (0 <= r < n and 0 <= c < n):
                raise ProblemError(f"entry ({r + 1}, {c + 1}) lies outside a {n}x{n} matrix", r)
            if (r, c) in seen:
                raise ProblemError(f"entry ({r + 1}, {c + 1}) is given twice", r)
            seen.add((r, c))
            rows.append(r)
            cols.append(c)
            vals.append(float(v))
        rows_a, cols_a, vals_a = np.array(rows, dtype=int), np.array(cols, dtype=int), np.array(vals)
        diag = np.zeros(n)
        on = rows_a == cols_a
        diag[rows_a[on]] = vals_a[on]
        off = sparse.csr_matrix((vals_a[~on], (rows_a[~on], cols_a[~on])), shape=(n, n))
        return cls._build(diag, off, alpha, u0, T, start_node)

    @classmethod
    def from_sparse(cls, A, alpha, u0, T: float, start_node: int = 0) -> "FodeProblem":
        A = sparse.csr_matrix(A, dtype=float)
        diag = A.diagonal()
        off = (A - sparse.diags(diag)).tocsr()
        return cls._build(diag, off, alpha, u0, T, start_node)

    @classmethod
    def _build(cls, diag, off, alpha, u0, T, start_node) -> "FodeProblem":
        off = sparse.csr_matrix(off)
        off.eliminate_zeros()
        off.sort_indices()
        n = len(diag)
        alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (n,))
        u0 = np.asarray(u0, dtype=float)
        if u0.shape != (n,):
            raise ProblemError(f"u0 must have length {n}, got shape {u0.shape}")
        return cls(
            diag=_frozen(diag),
            indptr=_frozen(off.indptr, np.int64),
            indices=_frozen(off.indices, np.int64),
            data=_frozen(off.data),
            alpha=_frozen(alpha),
            u0=_frozen(u0),
            T=float(T),
            start_node=int(start_node),
        )

    def dense(self) -> np.ndarray:
        A = self.offdiag_matrix().toarray()
        A[np.diag_indices(self.n)] = self.diag
        return A

    def offdiag_matrix(self) -> sparse.csr_matrix:
        return sparse.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))

    def matrix(self) -> sparse.csr_matrix:
        return (self.offdiag_matrix() + sparse.diags(self.diag)).tocsr()

    def entries(self) -> list[tuple[int, int]]:
        """Structural entries ``(row, col)``: the diagonal first, then off-diagonals row by row."""
        out = [(i, i) for i in range(self.n)]
        for i in range(self.n):
            out.extend((i, int(c)) for c in self.indices[self.indptr[i] : self.indptr[i + 1]])
        return out

    def with_changes(self, **kw) -> "FodeProblem":
        """Copy with some fields replaced (``A`` may be given as a dense matrix)."""
        if "A" in kw:
            A = kw.pop("A")
            base = FodeProblem.from_dense(A, self.alpha, self.u0, self.T, self.start_node)
            kw = {**dict(diag=base.diag, indptr=base.indptr, indices=base.indices, data=base.data), **kw}
        for name in ("diag", "data", "alpha", "u0"):
            if name in kw:
                kw[name] = _frozen(kw[name])
        if "T" in kw:
            kw["T"] = float(kw["T"])
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class EmbeddedChain:
    """Jump law and signed factors derived from ``A``, laid out in CSR order.

    For the edge ``i -> k`` stored at flat position ``e``: ``cols[e] = k``,
    ``cum[e]`` is the cumulative jump probability within row ``i`` and
    ``chi[e] = -sign(a_ik) * offsum[i] / a_ii``.
    """

    indptr: np.ndarray
    cols: np.ndarray
    cum: np.ndarray
    prob: np.ndarray
    chi: np.ndarray
    sign: np.ndarray
    offsum: np.ndarray
    chi_factor: np.ndarray
    absorbing: np.ndarray
    edge_row: np.ndarray = field(repr=False)

    @property
    def m_chi(self) -> float:
        """Largest ``|chi|`` over all edges (0 when there are none)."""
        return float(np.max(np.abs(self.chi))) if len(self.chi) else 0.0

    def row_cumprobs(self, i: int) -> np.ndarray:
        return self.cum[self.indptr[i] : self.indptr[i + 1]]

    def row_cols(self, i: int) -> np.ndarray:
        return self.cols[self.indptr[i] : self.indptr[i + 1]]

    def edge(self, i: int, k: int) -> int:
        """Flat position of edge ``i -> k``; ``KeyError`` if not stored."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        pos = lo + int(np.searchsorted(self.cols[lo:hi], k))
        if pos < hi and self.cols[pos] == k:
            return pos
        raise KeyError((i, k))

    def chi_of(self, i: int, k: int) -> float:
        return float(self.chi[self.edge(i, k)])


def validate_problem(p: FodeProblem, mode: Mode = "simplified", allow_unit_alpha: bool = False) -> EmbeddedChain:
    """Check the preconditions of the walk representation and build its chain.

    Rows without off-diagonal entries are valid and flagged as absorbing.
    ``allow_unit_alpha`` admits ``alpha_i = 1`` (the classical limit).
    """
    if mode not in MODES:
        raise ProblemError(f"unknown mode {mode!r}")
    n = p.n
    if n < 1:
        raise ProblemError("problem has no nodes")
    if not (math.isfinite(p.T) and p.T > 0):
        raise ProblemError(f"final time must be positive and finite, got {p.T!r}")
    if not 0 <= p.start_node < n:
        raise ProblemError(f"start node {p.start_node + 1} outside 1..{n}")
    for name in ("diag", "data", "u0", "alpha"):
        arr = getattr(p, name)
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            row = bad if name != "data" else int(np.searchsorted(p.indptr, bad, side="right") - 1)
            raise ProblemError(f"non-finite value in {name} (row {row + 1})", row)
    upper = 1.0
    for i, a in enumerate(p.alpha):
        if not (0.0 < a < upper or (allow_unit_alpha and a == upper)):
            raise AlphaOutOfRange(i, float(a))
    for i, d in enumerate(p.diag):
        if d == 0.0:
            raise ZeroDiagonal(i)
        if mode == "simplified" and d > 0.0:
            raise PositiveDiagonalInSimplifiedMode(i)

    indptr = np.asarray(p.indptr)
    counts = np.diff(indptr)
    edge_row = np.repeat(np.arange(n), counts)
    absval = np.abs(p.data)
    offsum = np.zeros(n)
    np.add.at(offsum, edge_row, absval)
    prob = absval / offsum[edge_row] if len(absval) else absval.copy()
    cum = np.empty_like(prob)
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        if hi > lo:
            c = np.cumsum(prob[lo:hi])
            c[-1] = 1.0
            cum[lo:hi] = c
    sign = np.sign(p.data)
    chi_factor = offsum / p.diag
    chi = -sign * chi_factor[edge_row]
    return EmbeddedChain(
        indptr=_frozen(indptr, np.int64),
        cols=_frozen(p.indices, np.int64),
        cum=_frozen(cum),
        prob=_frozen(prob),
        chi=_frozen(chi),
        sign=_frozen(sign),
        offsum=_frozen(offsum),
        chi_factor=_frozen(chi_factor),
        absorbing=_frozen(counts == 0, bool),
        edge_row=_frozen(edge_row, np.int64),
    )


def gen_random_problem(n: int, rng: RngStream, start_node: int = 0) -> FodeProblem:
    """Random diagonally dominant system with negative diagonal.

    Off-diagonals are standard normal, ``a_ii = -(1 + U) * sum_l |a_il|``,
    ``u0_i ~ U(0,1)``, ``T ~ U(0,1)`` and ``alpha_i ~ U(0.6, 1)``. Draw order
    from ``rng``: off-diagonals row by row, dominance factors, ``u0``, ``T``,
    ``alpha``.
    """
    if n < 2:
        raise ProblemError("random problems need at least two nodes")
    A = np.zeros((n, n))
    mask = ~np.eye(n, dtype=bool)
    A[mask] = rng.normal(n * (n - 1))
    factor = 1.0 + rng.uniform(n)
    A[np.diag_indices(n)] = -factor * np.abs(A).sum(axis=1)
    u0 = rng.uniform(n)
    T = float(rng.uniform())
    alpha = 0.6 + 0.4 * rng.uniform(n)
    return FodeProblem.from_dense(A, alpha, u0, T, start_node)


# --------------------------------------------------------------------------
# Robin-boundary fractional heat equation


@dataclass(frozen=True)
class RobinSpec:
    """Grid and coefficients of the Robin-boundary fractional heat problem."""

    n_x: int = 20
    b1: float = 1.0
    b2: float = -1.0
    alpha_param: float = 0.7
    mu: float = 0.1
    sigma: float = 0.025
    kappa: tuple[float, ...] | None = None

    @property
    def dx(self) -> float:
        return 1.0 / self.n_x

    @property
    def x(self) -> np.ndarray:
        return np.arange(1, self.n_x) * self.dx

    def kappa_values(self) -> np.ndarray:
        if self.kappa is None:
            return np.ones(self.n_x - 1)
        k = np.asarray(self.kappa, dtype=float)
        if k.shape != (self.n_x - 1,):
            raise ProblemError(f"kappa must have {self.n_x - 1} grid values")
        return k


def robin_g(x, alpha_param: float) -> np.ndarray:
    """Spatially varying exponent ``alpha (sin(pi x) + 1) / 4 + 1/2``."""
    return alpha_param * (np.sin(np.pi * np.asarray(x)) + 1.0) / 4.0 + 0.5


def robin_dg_dalpha(x) -> np.ndarray:
    return (np.sin(np.pi * np.asarray(x)) + 1.0) / 4.0


def robin_corner(spec: RobinSpec) -> float:
    den = spec.b1 * spec.dx - spec.b2
    if den == 0.0:
        raise RobinDenominatorZero()
    return spec.b2 / den + 2.0


def robin_a11(spec: RobinSpec) -> float:
    return -spec.kappa_values()[0] / spec.dx**2 * robin_corner(spec)


def build_robin_problem(spec: RobinSpec, T: float) -> FodeProblem:
    """``A = -L`` on the interior grid ``x_i = i dx``, ``i = 1..n_x-1``.

    ``L`` carries the ``(-1, 2, -1)`` stencil scaled by ``kappa(x_i)/dx^2``,
    the Robin correction in its first diagonal entry and a ``(-1, 1)``
    Neumann row at the far end. The walk starts at the first grid node.
    """
    if spec.n_x < 3:
        raise ProblemError("Robin grid needs n_x >= 3")
    n = spec.n_x - 1
    kap = spec.kappa_values() / spec.dx**2
    L = np.zeros((n, n))
    for i in range(n):
        L[i, i] = 2.0
        if i > 0:
            L[i, i - 1] = -1.0
        if i < n - 1:
            L[i, i + 1] = -1.0
    L[0, 0] = robin_corner(spec)
    L[n - 1, n - 1] = 1.0
    L *= kap[:, None]
    x = spec.x
    pulse = np.exp(-((x - spec.mu) ** 2) / (2.0 * spec.sigma**2))
    u0 = pulse / pulse.max()
    return FodeProblem.from_dense(-L, robin_g(x, spec.alpha_param), u0, T, start_node=0)


def robin_da11_db(spec: RobinSpec) -> tuple[float, float]:
    """Analytic ``(d a11 / d b1, d a11 / d b2)``."""
    den = spec.b1 * spec.dx - spec.b2
    if den == 0.0:
        raise RobinDenominatorZero()
    scale = -spec.kappa_values()[0] / spec.dx**2
    dcorner_db1 = -spec.b2 * spec.dx / den**2
    dcorner_db2 = spec.b1 * spec.dx / den**2
    return scale * dcorner_db1, scale * dcorner_db2


def chain_rule_robin(grad_a11: float, grad_alpha_vec, spec: RobinSpec) -> tuple[float, float, float]:
    """Map ``du1/da11`` and ``du1/dalpha_i`` to ``(d/db1, d/db2, d/d alpha_param)``."""
    da_db1, da_db2 = robin_da11_db(spec)
    d_alpha = float(np.dot(np.asarray(grad_alpha_vec, dtype=float), robin_dg_dalpha(spec.x)))
    return grad_a11 * da_db1, grad_a11 * da_db2, d_alpha


# --------------------------------------------------------------------------
# Dirichlet Laplacians for the jump-count benchmarks


def laplacian_matrix(n_x: int, d: int = 1) -> sparse.csr_matrix:
    """``n_x^2`` times the Dirichlet Laplacian on ``(n_x - 1)^d`` interior nodes."""
    m = n_x - 1
    if m < 1 or d < 1:
        raise ProblemError("Laplacian needs n_x >= 2 and d >= 1")
    lap1 = sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m, m), format="csr") * float(n_x) ** 2
    eye = sparse.identity(m, format="csr")
    out = lap1
    for _ in range(d - 1):
        out = sparse.kron(out, eye, format="csr") + sparse.kron(sparse.identity(out.shape[0]), lap1, format="csr")
    return out.tocsr()


def laplacian_problem(n_x: int, d: int, alpha: float, T: float) -> FodeProblem:
    """Benchmark problem: scaled Laplacian, constant exponent, unit data, centre start."""
    A = laplacian_matrix(n_x, d)
    n = A.shape[0]
    m = n_x - 1
    centre = sum((m // 2) * m**k for k in range(d))
    return FodeProblem.from_sparse(A, np.full(n, alpha), np.ones(n), T, start_node=centre)


# --------------------------------------------------------------------------
# JSON problem files


def problem_from_json(obj: dict) -> tuple[FodeProblem, dict]:
    """Parse a problem document; returns the problem and its run options.

    Options are ``mode``, ``seed`` and ``num_walks`` when present.
    """
    try:
        n = int(obj["n"])
        trip = [(int(r) - 1, int(c) - 1, float(v)) for r, c, v in obj["triplets"]]
        p = FodeProblem.from_triplets(
            n, trip, obj["alpha"], obj["u0"], float(obj["T"]), int(obj.get("start_node", 1)) - 1
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ProblemError):
            raise
        raise ProblemError(f"malformed problem document: {exc}") from exc
    opts = {k: obj[k] for k in ("mode", "seed", "num_walks") if k in obj}
    return p, opts


def problem_to_json(p: FodeProblem, **opts) -> dict:
    """Canonical document: sorted 1-based triplets, diagonal included."""
    A = p.matrix().tocoo()
    order = np.lexsort((A.col, A.row))
    trip = [[int(A.row[j]) + 1, int(A.col[j]) + 1, float(A.data[j])] for j in order]
    doc = {
        "n": p.n,
        "triplets": trip,
        "alpha": [float(a) for a in p.alpha],
        "u0": [float(u) for u in p.u0],
        "T": p.T,
        "start_node": p.start_node + 1,
    }
    doc.update({k: v for k, v in opts.items() if v is not None})
    return doc


def problem_hash(p: FodeProblem) -> str:
    text = json.dumps(problem_to_json(p), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_problem(path) -> tuple[FodeProblem, dict]:
    with open(path) as fh:
        return problem_from_json(json.load(fh))
