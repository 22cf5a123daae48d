"""Parallel reduction of walks into estimates, plus the statistics around them.

Walks are cut into fixed-size chunks of consecutive stream indices. Each
chunk is reduced to counts, means and centred second moments, and chunk
summaries are merged in chunk order with the pairwise update of Chan et al.
Neither the chunk boundaries nor the merge order depend on the number of
worker processes, so reports are bit-for-bit identical for any worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, Mapping

import numpy as np
from scipy import optimize, stats

from fodewalk.engine import BlockResult, run_block
from fodewalk.errors import FodeWalkError, ProblemError, SingularCovariance, WalkError
from fodewalk.mittag_leffler import mittag_leffler
from fodewalk.model import EmbeddedChain, FodeProblem, Mode, problem_hash, validate_problem
from fodewalk.rng import RngStream
from fodewalk.walker import Proposal, simulate_walk

DEFAULT_CHUNK = 2048


# --------------------------------------------------------------------------
# moments


@dataclass
class Moments:
    """Count, mean and centred sum of squares of a (vector) sample."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, x: np.ndarray) -> "Moments":
        x = np.asarray(x, dtype=float)
        mean = x.mean(axis=0)
        return cls(len(x), mean, ((x - mean) ** 2).sum(axis=0))

    def merge(self, other: "Moments") -> "Moments":
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / n)
        return Moments(n, mean, m2)

    @property
    def var(self) -> np.ndarray:
        return self.m2 / (self.count - 1)


@dataclass
class CoMoments:
    """Count, mean vector and centred cross-product matrix."""

    count: int
    mean: np.ndarray
    c2: np.ndarray

    @classmethod
    def of(cls, x: np.ndarray) -> "CoMoments":
        mean = x.mean(axis=0)
        xc = x - mean
        return cls(len(x), mean, xc.T @ xc)

    def merge(self, other: "CoMoments") -> "CoMoments":
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        c2 = self.c2 + other.c2 + np.outer(delta, delta) * (self.count * other.count / n)
        return CoMoments(n, mean, c2)

    @property
    def cov(self) -> np.ndarray:
        return self.c2 / (self.count - 1)


def _z(level: float) -> float:
    return float(stats.norm.ppf(1.0 - level / 2.0))


@dataclass
class QuantityStats:
    """Mean, sample variance and CLT interval of one estimated quantity (scalar or array)."""

    mean: np.ndarray
    var: np.ndarray
    n: int
    level: float = 0.05

    @property
    def half_width(self) -> np.ndarray:
        return _z(self.level) * np.sqrt(self.var / self.n)

    @property
    def ci(self) -> tuple[np.ndarray, np.ndarray]:
        return self.mean - self.half_width, self.mean + self.half_width

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(self.var / self.n)

    def __getitem__(self, idx) -> "QuantityStats":
        return QuantityStats(np.asarray(self.mean)[idx], np.asarray(self.var)[idx], self.n, self.level)


# --------------------------------------------------------------------------
# per-walk projections kept for bootstrapping


@dataclass(frozen=True)
class Projection:
    """A per-walk scalar to keep: ``J``, ``dT``, or ``J * <W, weights>``.

    ``kind`` is ``"J"``, ``"dT"``, ``"A"`` (weights over ``FodeProblem.entries()``)
    or ``"alpha"`` (weights over nodes).
    """

    kind: Literal["J", "dT", "A", "alpha"]
    weights: tuple[float, ...] | None = None

    def apply(self, block: BlockResult) -> np.ndarray:
        if self.kind == "J":
            return block.J.copy()
        if self.kind == "dT":
            return block.dT.copy()
        W = block.W_A if self.kind == "A" else block.W_alpha
        if W is None:
            raise ProblemError("sensitivity projections need simplified mode with sensitivities on")
        return block.J * (W @ np.asarray(self.weights, dtype=float))


# --------------------------------------------------------------------------
# chunk reduction


@dataclass
class ChunkSummary:
    J: Moments
    grad_u0: Moments
    dT: Moments | None
    grad_A: Moments | None
    grad_alpha: Moments | None
    cov_A: CoMoments | None
    jumps_sum: int
    jumps_max: int
    kept: dict[str, np.ndarray]

    def merge(self, other: "ChunkSummary") -> "ChunkSummary":
        def m(a, b):
            return None if a is None else a.merge(b)

        return ChunkSummary(
            self.J.merge(other.J),
            self.grad_u0.merge(other.grad_u0),
            m(self.dT, other.dT),
            m(self.grad_A, other.grad_A),
            m(self.grad_alpha, other.grad_alpha),
            m(self.cov_A, other.cov_A),
            self.jumps_sum + other.jumps_sum,
            max(self.jumps_max, other.jumps_max),
            {k: np.concatenate([v, other.kept[k]]) for k, v in self.kept.items()},
        )


@dataclass(frozen=True)
class _Job:
    problem: FodeProblem
    seed: int
    mode: str
    proposal: str
    sensitivities: bool
    covariance: bool
    keep: tuple[tuple[str, Projection], ...]


def _summarize(job: _Job, chain: EmbeddedChain, first: int, count: int) -> ChunkSummary:
    p = job.problem
    try:
        b = run_block(p, chain, job.seed, first, count, job.mode, job.proposal, job.sensitivities)
    except FodeWalkError as exc:
        raise _locate_failure(job, chain, first, count, exc) from exc
    sens = b.W_A is not None
    gA = b.J[:, None] * b.W_A if sens else None
    return ChunkSummary(
        J=Moments.of(b.J),
        grad_u0=Moments.of(b.grad_u0_dense(p.n)),
        dT=Moments.of(b.dT) if sens else None,
        grad_A=Moments.of(gA) if sens else None,
        grad_alpha=Moments.of(b.J[:, None] * b.W_alpha) if sens else None,
        cov_A=CoMoments.of(gA) if sens and job.covariance else None,
        jumps_sum=int(b.jumps.sum()),
        jumps_max=int(b.jumps.max()),
        kept={name: proj.apply(b) for name, proj in job.keep},
    )


def _locate_failure(job: _Job, chain, first: int, count: int, exc: BaseException) -> WalkError:
    for s in range(first, first + count):
        try:
            simulate_walk(job.problem, chain, RngStream(job.seed, s), job.mode, job.proposal)
        except FodeWalkError as inner:
            return WalkError(s, inner)
    return WalkError(first, exc)


def _chunk_task(args) -> ChunkSummary:
    job, first, count = args
    chain = validate_problem(job.problem, job.mode, allow_unit_alpha=True)
    return _summarize(job, chain, first, count)


# --------------------------------------------------------------------------
# report


@dataclass
class EstimateReport:
    """Reduction of ``n_walks`` walks for one problem.

    Sensitivity fields are ``None`` in general mode. ``grad_A`` is indexed
    like ``entries`` (the structural entries of ``A``).
    """

    n_walks: int
    seed: int
    mode: str
    level: float
    problem_hash: str
    entries: list[tuple[int, int]]
    solution: QuantityStats
    grad_u0: QuantityStats
    grad_A: QuantityStats | None
    grad_alpha: QuantityStats | None
    grad_T: QuantityStats | None
    jumps_mean: float
    jumps_max: int
    cov_A: np.ndarray | None = None
    kept: dict[str, np.ndarray] = field(default_factory=dict)

    def grad_A_dense(self) -> QuantityStats:
        """``grad_A`` scattered into ``n x n`` arrays (zeros off the structure)."""
        n = len(self.grad_u0.mean)
        mean = np.zeros((n, n))
        var = np.zeros((n, n))
        for c, (r, k) in enumerate(self.entries):
            mean[r, k] = self.grad_A.mean[c]
            var[r, k] = self.grad_A.var[c]
        return QuantityStats(mean, var, self.n_walks, self.level)

    def to_dict(self) -> dict:
        """JSON-ready report (1-based indices)."""

        def scal(q: QuantityStats) -> dict:
            lo, hi = q.ci
            return {"mean": float(q.mean), "var": float(q.var), "ci": [float(lo), float(hi)]}

        def vec(q: QuantityStats, labels) -> list:
            lo, hi = q.ci
            out = []
            for j, lab in enumerate(labels):
                item = dict(lab)
                item.update(mean=float(q.mean[j]), var=float(q.var[j]), ci=[float(lo[j]), float(hi[j])])
                out.append(item)
            return out

        n = len(self.grad_u0.mean)
        nodes = [{"node": j + 1} for j in range(n)]
        unavailable = "not available in general mode"
        return {
            "schema": 1,
            "problem_hash": self.problem_hash,
            "mode": self.mode,
            "n_walks": self.n_walks,
            "seed": self.seed,
            "level": self.level,
            "solution": scal(self.solution),
            "grad_u0": vec(self.grad_u0, nodes),
            "grad_A": vec(self.grad_A, [{"row": r + 1, "col": k + 1} for r, k in self.entries])
            if self.grad_A is not None
            else unavailable,
            "grad_alpha": vec(self.grad_alpha, nodes) if self.grad_alpha is not None else unavailable,
            "grad_T": scal(self.grad_T) if self.grad_T is not None else unavailable,
            "jumps": {"mean": self.jumps_mean, "max": self.jumps_max},
        }

    def to_rows(self) -> list[dict]:
        """Flat rows ``quantity,row,col,mean,var,ci_low,ci_high`` for CSV output."""
        rows = []

        def add(name, q: QuantityStats, labels):
            lo, hi = q.ci
            mean, var = np.atleast_1d(q.mean), np.atleast_1d(q.var)
            lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
            for j, (r, c) in enumerate(labels):
                rows.append(dict(quantity=name, row=r, col=c, mean=mean[j], var=var[j], ci_low=lo[j], ci_high=hi[j]))

        n = len(self.grad_u0.mean)
        add("solution", self.solution, [("", "")])
        add("grad_u0", self.grad_u0, [(j + 1, "") for j in range(n)])
        if self.grad_A is not None:
            add("grad_A", self.grad_A, [(r + 1, k + 1) for r, k in self.entries])
            add("grad_alpha", self.grad_alpha, [(j + 1, "") for j in range(n)])
            add("grad_T", self.grad_T, [("", "")])
        return rows


def estimate(
    p: FodeProblem,
    n_walks: int,
    workers: int = 1,
    seed: int = 0,
    mode: Mode = "simplified",
    *,
    proposal: Proposal = "exponential",
    level: float = 0.05,
    chunk: int = DEFAULT_CHUNK,
    sensitivities: bool = True,
    covariance: bool = False,
    keep: Mapping[str, Projection] | None = None,
    allow_unit_alpha: bool = False,
) -> EstimateReport:
    """Run walks on streams ``0 .. n_walks-1`` and reduce them.

    ``covariance`` adds the sample covariance of the flattened ``grad_A``
    estimator; ``keep`` stores selected per-walk scalars (for bootstrapping).
    """
    if n_walks < 2:
        raise ProblemError("at least two walks are needed for a sample variance")
    if not 0 < level < 0.5:
        raise ProblemError("significance level must lie in (0, 0.5)")
    if workers < 1:
        raise ProblemError("workers must be at least 1")
    chain = validate_problem(p, mode, allow_unit_alpha=allow_unit_alpha)
    job = _Job(p, int(seed), mode, proposal, sensitivities, covariance, tuple((keep or {}).items()))
    bounds = [(s, min(chunk, n_walks - s)) for s in range(0, n_walks, chunk)]

    if workers == 1 or len(bounds) == 1:
        summaries = [_summarize(job, chain, s, c) for s, c in bounds]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(bounds))) as pool:
            summaries = list(pool.map(_chunk_task, [(job, s, c) for s, c in bounds]))

    total = summaries[0]
    for s in summaries[1:]:
        total = total.merge(s)

    def q(m: Moments | None):
        return None if m is None else QuantityStats(m.mean, m.var, n_walks, level)

    return EstimateReport(
        n_walks=n_walks,
        seed=int(seed),
        mode=mode,
        level=level,
        problem_hash=problem_hash(p),
        entries=p.entries(),
        solution=q(total.J),
        grad_u0=q(total.grad_u0),
        grad_A=q(total.grad_A),
        grad_alpha=q(total.grad_alpha),
        grad_T=q(total.dT),
        jumps_mean=total.jumps_sum / n_walks,
        jumps_max=total.jumps_max,
        cov_A=total.cov_A.cov if total.cov_A is not None else None,
        kept=total.kept,
    )


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


# --------------------------------------------------------------------------
# variance bound


@dataclass(frozen=True)
class VarianceBound:
    M_chi: float
    M_p: float
    M_s: float
    lam: float
    bound: float


def _max_on_interval(f: Callable[[np.ndarray], np.ndarray], T: float) -> float:
    grid = np.linspace(0.0, T, 10_001)[1:]
    vals = f(grid)
    j = int(np.argmax(vals))
    best = float(vals[j])
    lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, len(grid) - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda t: -float(f(np.array([t]))[0]), bounds=(lo, hi), method="bounded")
        best = max(best, -float(res.fun))
    return best


def effective_rate(p: FodeProblem) -> float:
    """Largest rate ``r`` with ``E_alpha_i(a_ii t^alpha_i) <= exp(-r t)`` for all nodes and ``t <= T``.

    The Mittag-Leffler hazard is non-increasing, so the cumulative hazard
    over ``t`` is smallest at ``t = T``; the rate is therefore
    ``min_i -log E_alpha_i(a_ii T^alpha_i) / T`` (``min_i |a_ii|`` when every
    exponent is 1).
    """
    surv = mittag_leffler(np.asarray(p.alpha), 1.0, np.asarray(p.diag) * p.T ** np.asarray(p.alpha))
    return float(np.min(-np.log(surv) / p.T))


def variance_bound(p: FodeProblem, mode: Mode = "simplified", rate: Literal["effective", "max_diag"] = "effective") -> VarianceBound:
    """Bound on ``E(J^2)`` obtained by conditioning on the number of jumps.

    Simplified mode: ``max u0^2 exp(lambda T (M_chi^2 - 1))``. With
    ``rate="effective"`` (default) ``lambda`` is :func:`effective_rate`, which
    makes every sojourn truncated at ``T`` shorter in distribution than an
    exponential with that rate, so the jump count dominates a Poisson count
    and the bound holds. ``rate="max_diag"`` uses ``lambda = max |a_ii|``,
    which is only a valid bound when all exponents are 1 and all rates equal.

    General mode uses the exponential proposal with ``lambda = max |a_ii|``
    and bounds the importance weights over ``t in [0, T]``: ``M_p`` for each
    interior event and ``M_s`` for the final interval, giving
    ``max u0^2 M_s^2 exp(lambda T ((M_p M_chi)^2 - 1))``.
    """
    chain = validate_problem(p, mode, allow_unit_alpha=True)
    m_chi = chain.m_chi
    u2 = float(np.max(p.u0**2))
    if mode == "simplified":
        lam = effective_rate(p) if rate == "effective" else float(np.max(np.abs(p.diag)))
        return VarianceBound(m_chi, 1.0, 1.0, lam, u2 * math.exp(lam * p.T * (m_chi**2 - 1.0)))
    lam = float(np.max(np.abs(p.diag)))
    m_p = 0.0
    m_s = 0.0
    for i in range(p.n):
        a, al = float(p.diag[i]), float(p.alpha[i])

        def dens_ratio(t, a=a, al=al):
            tp = t**al
            return np.abs(-a * tp / t * mittag_leffler(al, al, a * tp)) * np.exp(lam * t) / lam

        def surv_ratio(t, a=a, al=al):
            return np.abs(mittag_leffler(al, 1.0, a * t**al)) * np.exp(lam * t)

        m_p = max(m_p, _max_on_interval(dens_ratio, p.T))
        m_s = max(m_s, _max_on_interval(surv_ratio, p.T), 1.0)
    bound = u2 * m_s**2 * math.exp(lam * p.T * ((m_p * m_chi) ** 2 - 1.0))
    return VarianceBound(m_chi, m_p, m_s, lam, bound)


# --------------------------------------------------------------------------
# hypothesis tests and bootstrap


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest test class

    statistic: float
    pvalue: float
    passed: bool
    dropped: tuple[int, ...] = ()

    def __bool__(self) -> bool:
        return self.passed


def t_test(sample_mean: float, sample_var: float, n: int, reference: float, level: float = 0.05) -> TestResult:
    """Two-sided one-sample t-test of ``E = reference``; passes when not rejected."""
    if n < 2:
        raise ProblemError("t-test needs at least two samples")
    se = math.sqrt(sample_var / n)
    diff = sample_mean - reference
    if se == 0.0:
        passed = diff == 0.0
        return TestResult(0.0 if passed else math.inf, 1.0 if passed else 0.0, passed)
    t = diff / se
    pval = float(2.0 * stats.t.sf(abs(t), n - 1))
    return TestResult(float(t), pval, pval >= level)


DEGENERATE_RTOL = 1e-14
DEGENERATE_ATOL = 1e-10


def hotelling_test(sample_mean, sample_cov, n: int, reference, level: float = 0.05) -> TestResult:
    """Hotelling ``T^2`` test of ``E = reference`` for a mean vector.

    Components whose sample variance is below ``1e-14 * scale^2`` are dropped
    (``scale`` is the largest magnitude among means, references and standard
    deviations); each dropped component must equal its reference to
    ``1e-10``, otherwise the test fails outright.
    """
    x = np.atleast_1d(np.asarray(sample_mean, dtype=float))
    mu = np.atleast_1d(np.asarray(reference, dtype=float))
    S = np.atleast_2d(np.asarray(sample_cov, dtype=float))
    var = np.diag(S)
    scale = max(np.max(np.abs(x)), np.max(np.abs(mu)), float(np.sqrt(np.max(np.maximum(var, 0.0)))))
    degenerate = var < DEGENERATE_RTOL * scale**2
    dropped = tuple(int(j) for j in np.flatnonzero(degenerate))
    if np.any(np.abs(x[degenerate] - mu[degenerate]) > DEGENERATE_ATOL):
        return TestResult(math.inf, 0.0, False, dropped)
    keep = ~degenerate
    d = int(keep.sum())
    if d == 0:
        return TestResult(0.0, 1.0, True, dropped)
    if n <= d:
        raise ProblemError(f"Hotelling test needs more samples ({n}) than dimensions ({d})")
    Sk = S[np.ix_(keep, keep)]
    sd = np.sqrt(np.diag(Sk))
    corr = Sk / np.outer(sd, sd)
    if np.linalg.cond(corr) > 1e12:
        raise SingularCovariance("sample covariance is singular after dropping degenerate components")
    diff = (x - mu)[keep]
    t2 = float(n * diff @ np.linalg.solve(Sk, diff))
    fstat = t2 * (n - d) / (d * (n - 1))
    pval = float(stats.f.sf(fstat, d, n - d))
    return TestResult(t2, pval, pval >= level, dropped)


def bootstrap_ci(
    samples,
    statistic: Callable[[np.ndarray], float] | None = None,
    B: int = 5000,
    level: float = 0.05,
    seed: int = 0,
    batch: int = 20,
) -> tuple[float, float]:
    """Percentile bootstrap interval ``[q_level, q_(1-level)]``.

    ``samples`` holds one row per walk (one or more columns). Each of the
    ``B`` replicates resamples the rows with replacement and evaluates
    ``statistic`` on the vector of resampled column means (the default is
    the mean of a single column).
    """
    return bootstrap_cis(samples, [statistic], B, level, seed, batch)[0]


def bootstrap_cis(samples, statistics, B: int = 5000, level: float = 0.05, seed: int = 0, batch: int = 20):
    """Several statistics evaluated on the same ``B`` resamples; one interval each."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = len(x)
    if n == 0:
        raise ProblemError("bootstrap needs at least one sample")
    if B < 100:
        raise ProblemError("bootstrap needs at least 100 replicates")
    stats_ = [(lambda m: float(m[0])) if f is None else f for f in statistics]
    # Resampled means are formed about the first row, so a constant sample
    # reproduces its value exactly.
    shift = x[0].copy()
    xc = x - shift
    rng = np.random.default_rng(seed)
    values = np.empty((len(stats_), B))
    done = 0
    while done < B:
        b = min(batch, B - done)
        idx = rng.integers(0, n, size=(b, n))
        means = shift + xc[idx].mean(axis=1)
        for r in range(b):
            for k, f in enumerate(stats_):
                values[k, done + r] = f(means[r])
        done += b
    out = []
    for row in values:
        lo, hi = np.quantile(row, [level, 1.0 - level])
        out.append((float(lo), float(hi)))
    return out
