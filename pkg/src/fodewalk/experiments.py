"""Reproducible studies built on the estimator and the deterministic oracles."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from fodewalk.estimator import Projection, bootstrap_cis, estimate, hotelling_test, t_test
from fodewalk.errors import FodeWalkError
from fodewalk.model import (
    RobinSpec,
    build_robin_problem,
    gen_random_problem,
    laplacian_problem,
    robin_dg_dalpha,
    validate_problem,
)
from fodewalk.reference import L1Config, fd_sensitivities, fd_step, l1_batch
from fodewalk.rng import RngStream
from fodewalk.engine import run_block

VALIDATION_COLUMNS = ("u", "d_alpha", "d_u0", "d_T", "d_A")

#: Stream-family offset separating problem generation from walk streams.
_GEN_SALT = 0x5EED_0F_F0DE


def _mix(seed: int, index: int) -> int:
    return (int(seed) * 0x9E3779B97F4A7C15 + int(index) + 1) & 0xFFFFFFFFFFFFFFFF


# --------------------------------------------------------------------------
# random-system validation


@dataclass
class SystemCheck:
    index: int
    passed: dict[str, bool]
    pvalues: dict[str, float]
    error: str | None = None


@dataclass
class ValidationTable:
    systems: int
    n_walks: int
    level: float
    counts: dict[str, int]
    checks: list[SystemCheck] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "systems": self.systems,
            "n_walks": self.n_walks,
            "level": self.level,
            "counts": self.counts,
            "failures": [c.index for c in self.checks if c.error],
        }


def validation_problem(seed: int, index: int, n: int = 5):
    """The ``index``-th random validation system for ``seed``."""
    return gen_random_problem(n, RngStream(seed ^ _GEN_SALT, index))


def check_system(
    p, n_walks: int, seed: int, level: float = 0.05, cfg: L1Config = L1Config(1024, True), workers: int = 1
) -> tuple[dict[str, bool], dict[str, float]]:
    """Five hypothesis tests of one system against its FD-L1 oracle.

    Scalar t-tests for ``u_i(T)``, ``du_i/dalpha_i``, ``du_i/du0_i`` and
    ``du_i/dT`` at the start node ``i``; Hotelling on the flattened ``du_i/dA``.
    """
    i = p.start_node
    rep = estimate(p, n_walks, workers=workers, seed=seed, covariance=True, level=level)
    ref = fd_sensitivities(p, cfg)
    ref_A = np.array([ref.dA[i, r, c] for r, c in rep.entries])
    tests = {
        "u": t_test(float(rep.solution.mean), float(rep.solution.var), n_walks, ref.u[i], level),
        "d_alpha": t_test(rep.grad_alpha.mean[i], rep.grad_alpha.var[i], n_walks, ref.dalpha[i, i], level),
        "d_u0": t_test(rep.grad_u0.mean[i], rep.grad_u0.var[i], n_walks, ref.du0[i, i], level),
        "d_T": t_test(float(rep.grad_T.mean), float(rep.grad_T.var), n_walks, ref.dT[i], level),
        "d_A": hotelling_test(rep.grad_A.mean, rep.cov_A, n_walks, ref_A, level),
    }
    return {k: bool(v) for k, v in tests.items()}, {k: v.pvalue for k, v in tests.items()}


def validation_table(
    systems: int = 100,
    n: int = 5,
    n_walks: int = 10_000,
    seed: int = 0,
    level: float = 0.05,
    cfg: L1Config = L1Config(1024, True),
    workers: int = 1,
    progress=None,
) -> ValidationTable:
    """Pass counts of the five tests over ``systems`` random problems.

    A system whose run raises is recorded as failing every column and the
    study continues.
    """
    counts = {c: 0 for c in VALIDATION_COLUMNS}
    checks = []
    for s in range(systems):
        p = validation_problem(seed, s, n)
        try:
            passed, pvals = check_system(p, n_walks, _mix(seed, s), level, cfg, workers)
            check = SystemCheck(s, passed, pvals)
        except FodeWalkError as exc:
            check = SystemCheck(s, {c: False for c in VALIDATION_COLUMNS}, {}, str(exc))
        for c in VALIDATION_COLUMNS:
            counts[c] += check.passed[c]
        checks.append(check)
        if progress is not None:
            progress(s, check)
    return ValidationTable(systems, n_walks, level, counts, checks)


# --------------------------------------------------------------------------
# Robin sweep


ROBIN_T = 0.002
ROBIN_ALPHAS = (0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
ROBIN_A11_STEPS = (-3, -2, -1, 0, 1, 2)


@dataclass
class RobinPoint:
    quantity: str  # "L_alpha", "dL_alpha", "L_a11", "dL_a11"
    theta: float
    deterministic: float
    ci: tuple[float, float]

    @property
    def overlap(self) -> bool:
        lo, hi = self.ci
        return bool(lo <= self.deterministic <= hi)


@dataclass
class RobinStudy:
    spec: RobinSpec
    T: float
    a11_0: float
    n_walks: int
    points: list[RobinPoint]

    @property
    def overlaps(self) -> int:
        return sum(p.overlap for p in self.points)

    def to_rows(self) -> list[dict]:
        return [
            dict(
                quantity=p.quantity,
                theta=p.theta,
                deterministic=p.deterministic,
                ci_low=p.ci[0],
                ci_high=p.ci[1],
                overlap=p.overlap,
            )
            for p in self.points
        ]


def _with_a11(p, a11: float):
    d = np.array(p.diag)
    d[0] = a11
    return p.with_changes(diag=d)


def robin_study(
    spec: RobinSpec = RobinSpec(),
    T: float = ROBIN_T,
    n_walks: int = 1_000_000,
    seed: int = 0,
    B: int = 5000,
    level: float = 0.05,
    cfg: L1Config = L1Config(1024, True),
    alphas=ROBIN_ALPHAS,
    a11_steps=ROBIN_A11_STEPS,
    workers: int = 1,
) -> RobinStudy:
    """Quadratic losses in ``alpha`` and ``a11`` and their gradients, deterministic vs bootstrap.

    The observation is ``u_1(T)`` at the true parameters. Deterministically
    it is the L1 value; stochastically it is the walk estimate at the true
    parameters computed on the same streams, and each bootstrap replicate
    resamples whole walk indices so both estimates move together.
    """
    base = build_robin_problem(spec, T)
    a11_0 = float(base.diag[0])
    dg = tuple(float(v) for v in robin_dg_dalpha(spec.x))
    e11 = tuple(1.0 if j == 0 else 0.0 for j in range(len(base.entries())))

    def run(p, grad: Projection):
        rep = estimate(p, n_walks, workers=workers, seed=seed, sensitivities=True,
                       keep={"J": Projection("J"), "G": grad})
        return rep.kept["J"], rep.kept["G"]

    # Deterministic values: u and its central difference for every sweep point.
    def det(problems, thetas, rebuild):
        out = []
        for p, th in zip(problems, thetas):
            h = fd_step(th)
            trio = [p, rebuild(th + h), rebuild(th - h)]
            U = l1_batch(
                np.stack([q.dense() for q in trio]), np.stack([q.alpha for q in trio]),
                np.stack([q.u0 for q in trio]), np.full(3, T), cfg.N_t,
            )
            if cfg.richardson:
                U2 = l1_batch(
                    np.stack([q.dense() for q in trio]), np.stack([q.alpha for q in trio]),
                    np.stack([q.u0 for q in trio]), np.full(3, T), 2 * cfg.N_t,
                )
                U = 2.0 * U2 - U
            out.append((U[0, 0], (U[1, 0] - U[2, 0]) / (2.0 * h)))
        return out

    points: list[RobinPoint] = []

    def sweep(name, thetas, rebuild, grad, theta0):
        problems = [rebuild(th) for th in thetas]
        d_vals = det(problems, thetas, rebuild)
        u_true = det([rebuild(theta0)], [theta0], rebuild)[0][0]
        J0, _ = run(rebuild(theta0), grad)
        for th, p, (u_det, du_det) in zip(thetas, problems, d_vals):
            if th == theta0:
                J, G = J0, run(p, grad)[1]
            else:
                J, G = run(p, grad)
            samples = np.column_stack([J, G, J0])
            L_det = 0.5 * (u_det - u_true) ** 2
            dL_det = du_det * (u_det - u_true)
            ci_L, ci_dL = bootstrap_cis(
                samples, [lambda m: 0.5 * (m[0] - m[2]) ** 2, lambda m: m[1] * (m[0] - m[2])], B, level, seed
            )
            points.append(RobinPoint(f"L_{name}", float(th), float(L_det), ci_L))
            points.append(RobinPoint(f"dL_{name}", float(th), float(dL_det), ci_dL))

    def rebuild_alpha(a):
        return build_robin_problem(
            RobinSpec(spec.n_x, spec.b1, spec.b2, a, spec.mu, spec.sigma, spec.kappa), T
        )

    sweep("alpha", list(alphas), rebuild_alpha, Projection("alpha", dg), spec.alpha_param)
    a11s = [a11_0 + 5.0 * i for i in a11_steps]
    sweep("a11", a11s, lambda a: _with_a11(base, a), Projection("A", e11), a11_0)
    return RobinStudy(spec, T, a11_0, n_walks, points)


# --------------------------------------------------------------------------
# jump-count benchmarks


@dataclass
class BenchRow:
    family: str
    alpha: float
    T: float
    n_x: int
    d: int
    mean_jumps: float
    stderr_jumps: float
    seconds_per_walk: float


def mean_jumps(p, n_walks: int, seed: int) -> tuple[float, float, float]:
    chain = validate_problem(p, allow_unit_alpha=True)
    t0 = time.perf_counter()
    b = run_block(p, chain, seed, 0, n_walks, sensitivities=False)
    elapsed = time.perf_counter() - t0
    nu = b.jumps.astype(float)
    return float(nu.mean()), float(nu.std(ddof=1) / math.sqrt(n_walks)), elapsed / n_walks


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def linear_r2(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    return float(1.0 - resid @ resid / ((y - y.mean()) @ (y - y.mean())))


def bench_time(alphas=(0.5, 0.75, 1.0), Ts=(1, 2, 4, 8, 16), n_x: int = 4, n_walks: int = 2000, seed: int = 0):
    rows = []
    for a in alphas:
        for T in Ts:
            m, se, spw = mean_jumps(laplacian_problem(n_x, 1, a, T), n_walks, seed)
            rows.append(BenchRow("time", a, T, n_x, 1, m, se, spw))
    return rows


def bench_grid(n_xs=(4, 8, 16, 32), T: float = 0.1, alpha: float = 1.0, n_walks: int = 2000, seed: int = 0):
    rows = []
    for n_x in n_xs:
        m, se, spw = mean_jumps(laplacian_problem(n_x, 1, alpha, T), n_walks, seed)
        rows.append(BenchRow("grid", alpha, T, n_x, 1, m, se, spw))
    return rows


def bench_dimension(ds=(1, 2, 3, 4), n_x: int = 5, T: float = 0.5, alpha: float = 0.75, n_walks: int = 2000, seed: int = 0):
    rows = []
    for d in ds:
        m, se, spw = mean_jumps(laplacian_problem(n_x, d, alpha, T), n_walks, seed)
        rows.append(BenchRow("dimension", alpha, T, n_x, d, m, se, spw))
    return rows


def bench_summary(time_rows, grid_rows, dim_rows) -> dict:
    out = {"time_slopes": {}, "grid_slope": None, "dimension_r2": None}
    for a in sorted({r.alpha for r in time_rows}):
        rs = [r for r in time_rows if r.alpha == a]
        out["time_slopes"][a] = loglog_slope([r.T for r in rs], [r.mean_jumps for r in rs])
    if grid_rows:
        out["grid_slope"] = loglog_slope([r.n_x for r in grid_rows], [r.mean_jumps for r in grid_rows])
    if dim_rows:
        out["dimension_r2"] = linear_r2([r.d for r in dim_rows], [r.mean_jumps for r in dim_rows])
    return out
