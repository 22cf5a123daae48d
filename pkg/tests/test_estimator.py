import math

import numpy as np
import pytest
from scipy import stats

import fodewalk.estimator as est
from fodewalk.errors import ProblemError, SingularCovariance, StructuralError, WalkError
from fodewalk.estimator import (
    CoMoments,
    Moments,
    Projection,
    bootstrap_ci,
    bootstrap_cis,
    effective_rate,
    estimate,
    hotelling_test,
    t_test,
    variance_bound,
)
from fodewalk.mittag_leffler import ml_eval
from fodewalk.model import FodeProblem, gen_random_problem
from fodewalk.rng import RngStream


def scalar(alpha=0.7, lam=1.0, T=1.0, u0=1.0):
    return FodeProblem.from_dense([[-lam]], [alpha], [u0], T)


def test_scalar_mean_within_four_sigma():
    rep = estimate(scalar(), 200_000, seed=1)
    exact = ml_eval(0.7, 1.0, -1.0).value
    assert abs(rep.solution.mean - exact) < 4 * rep.solution.stderr


def test_ci_half_width_formula():
    rep = estimate(scalar(), 5000, seed=2, level=0.1)
    hw = stats.norm.ppf(0.95) * math.sqrt(rep.solution.var / 5000)
    assert rep.solution.half_width == pytest.approx(hw, rel=1e-14)
    lo, hi = rep.solution.ci
    assert hi - lo == pytest.approx(2 * hw)


def test_preconditions():
    with pytest.raises(ProblemError):
        estimate(scalar(), 1)
    with pytest.raises(ProblemError):
        estimate(scalar(), 100, level=0.7)
    with pytest.raises(ProblemError):
        estimate(scalar(), 100, workers=0)


def test_worker_count_does_not_change_report():
    p = gen_random_problem(4, RngStream(3, 3))
    a = estimate(p, 9000, workers=1, seed=5, chunk=1000).to_dict()
    b = estimate(p, 9000, workers=3, seed=5, chunk=1000).to_dict()
    assert a == b


def test_unvisited_rows_are_exactly_zero():
    # Node 3 cannot be reached from node 1.
    A = np.array([[-2.0, 1.0, 0.0], [0.5, -1.5, 0.0], [1.0, 1.0, -3.0]])
    p = FodeProblem.from_dense(A, [0.7, 0.8, 0.9], [1.0, 0.5, 2.0], 1.0)
    rep = estimate(p, 4000, seed=0)
    dense = rep.grad_A_dense()
    assert np.all(dense.mean[2] == 0.0) and np.all(dense.var[2] == 0.0)
    assert rep.grad_alpha.mean[2] == 0.0 and rep.grad_alpha.var[2] == 0.0
    assert rep.grad_u0.mean[2] == 0.0


def test_report_schema():
    rep = estimate(scalar(), 100, seed=0)
    d = rep.to_dict()
    for key in ("schema", "problem_hash", "mode", "n_walks", "seed", "solution", "grad_u0", "grad_A",
                "grad_alpha", "grad_T", "jumps"):
        assert key in d
    assert d["grad_A"][0]["row"] == 1 and d["grad_A"][0]["col"] == 1
    rows = rep.to_rows()
    assert rows[0]["quantity"] == "solution"


def test_general_mode_marks_sensitivities_unavailable():
    p = FodeProblem.from_dense([[-2.0, 1.0], [0.5, 0.3]], 0.7, [1.0, 1.0], 0.5)
    d = estimate(p, 1000, mode="general").to_dict()
    assert d["grad_A"] == d["grad_alpha"] == d["grad_T"] == "not available in general mode"


def test_kept_projections():
    p = gen_random_problem(3, RngStream(1, 1))
    w = tuple(float(i == 0) for i in range(len(p.entries())))
    rep = estimate(p, 3000, seed=4, chunk=700, keep={"J": Projection("J"), "a11": Projection("A", w)})
    assert rep.kept["J"].mean() == pytest.approx(rep.solution.mean, rel=1e-12)
    assert rep.kept["a11"].mean() == pytest.approx(rep.grad_A.mean[0], rel=1e-12)


def test_walk_error_carries_stream_index(monkeypatch):
    real = est.run_block

    def boom(p, chain, seed, first, count, *args, **kw):
        if first <= 1234 < first + count:
            raise StructuralError("synthetic")
        return real(p, chain, seed, first, count, *args, **kw)

    def scalar_walk(p, chain, rng, mode, proposal):
        if rng.stream_index == 1234:
            raise StructuralError("synthetic")

    monkeypatch.setattr(est, "run_block", boom)
    monkeypatch.setattr(est, "simulate_walk", scalar_walk)
    with pytest.raises(WalkError) as exc:
        estimate(scalar(), 3000, chunk=1000)
    assert exc.value.stream_index == 1234


def test_moment_merging_matches_direct():
    x = RngStream(0, 0).normal(1000).reshape(500, 2)
    m = Moments.of(x[:123]).merge(Moments.of(x[123:]))
    np.testing.assert_allclose(m.mean, x.mean(axis=0), rtol=1e-13)
    np.testing.assert_allclose(m.var, x.var(axis=0, ddof=1), rtol=1e-12)
    c = CoMoments.of(x[:300]).merge(CoMoments.of(x[300:]))
    np.testing.assert_allclose(c.cov, np.cov(x.T), rtol=1e-12)


# -- variance bound --------------------------------------------------------


def test_variance_bound_two_by_two():
    p = FodeProblem.from_dense([[-2.0, 1.0], [1.0, -2.0]], [1.0, 1.0], [1.0, 1.0], 1.3)
    vb = variance_bound(p, rate="max_diag")
    assert vb.M_chi == pytest.approx(0.5)
    assert vb.bound == pytest.approx(math.exp(-1.5 * 1.3))
    # Unit exponents with equal rates: the effective rate is the diagonal rate.
    assert variance_bound(p).bound == pytest.approx(vb.bound, rel=1e-12)


def test_variance_bound_single_node():
    p = scalar(0.6, 2.0, 1.5, 3.0)
    assert variance_bound(p, rate="max_diag").bound == pytest.approx(9.0 * math.exp(-3.0))
    # The effective rate makes the bound exact: E(J^2) = u0^2 E_a(-lam T^a).
    exact = 9.0 * ml_eval(0.6, 1.0, -2.0 * 1.5**0.6).value
    assert variance_bound(p).bound == pytest.approx(exact, rel=1e-12)
    assert variance_bound(p).M_chi == 0.0


def test_effective_rate_dominates_every_survival():
    from fodewalk.mittag_leffler import mittag_leffler

    p = gen_random_problem(5, RngStream(0, 11))
    r = effective_rate(p)
    t = np.linspace(1e-6, p.T, 2000)
    for a, al in zip(p.diag, p.alpha):
        assert np.all(mittag_leffler(al, 1.0, a * t**al) <= np.exp(-r * t) * (1 + 1e-12))
    unit = p.with_changes(alpha=np.ones(5))
    assert effective_rate(unit) == pytest.approx(np.min(np.abs(p.diag)), rel=1e-12)


def test_general_bound_reduces_to_simplified_for_unit_exponents():
    p = FodeProblem.from_dense([[-2.0, 1.0], [1.0, -2.0]], [1.0, 1.0], [1.0, 1.0], 1.0)
    g = variance_bound(p, "general")
    assert g.M_p == pytest.approx(1.0, rel=1e-9) and g.M_s == pytest.approx(1.0)
    assert g.bound == pytest.approx(math.exp(-1.5), rel=1e-8)


def test_general_bound_with_positive_diagonal():
    p = FodeProblem.from_dense([[-2.0, 1.0], [0.5, 0.3]], [0.7, 0.9], [1.0, 1.0], 0.5)
    g = variance_bound(p, "general")
    assert g.M_s >= 1.0 and np.isfinite(g.bound)


# -- hypothesis tests --------------------------------------------------------


def test_t_test_examples():
    assert t_test(1.0, 4.0, 100, 1.0)
    assert not t_test(1.0, 4.0, 100, 1.0 + 10 * 0.2)
    assert t_test(2.0, 0.0, 50, 2.0) and not t_test(2.0, 0.0, 50, 2.1)


def test_t_test_calibration():
    rng = np.random.default_rng(1)
    x = rng.normal(0.3, 2.0, size=(1000, 200))
    rej = sum(not t_test(r.mean(), r.var(ddof=1), 200, 0.3) for r in x)
    assert 0.03 <= rej / 1000 <= 0.07


def test_hotelling_examples():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(500, 3))
    m, S = x.mean(axis=0), np.cov(x.T)
    assert hotelling_test(m, S, 500, m)
    # One-dimensional input: same decision and p-value as the t-test.
    for ref in (0.0, 0.05, 0.2):
        h = hotelling_test(m[:1], S[:1, :1], 500, [ref])
        t = t_test(m[0], S[0, 0], 500, ref)
        assert h.pvalue == pytest.approx(t.pvalue, rel=1e-9) and bool(h) == bool(t)
        assert h.statistic == pytest.approx(t.statistic**2, rel=1e-12)


def test_hotelling_calibration():
    rng = np.random.default_rng(3)
    d, n, reps = 5, 10_000, 1000
    L = np.tril(rng.normal(size=(d, d))) + 3 * np.eye(d)
    rej = 0
    for _ in range(reps):
        x = rng.normal(size=(n, d)) @ L.T
        rej += not hotelling_test(x.mean(axis=0), np.cov(x.T), n, np.zeros(d))
    assert 0.03 <= rej / reps <= 0.07


def test_hotelling_degenerate_components():
    rng = np.random.default_rng(4)
    x = np.column_stack([rng.normal(size=400), np.zeros(400), rng.normal(size=400)])
    m, S = x.mean(axis=0), np.cov(x.T)
    res = hotelling_test(m, S, 400, [m[0], 0.0, m[2]])
    assert res and res.dropped == (1,)
    assert not hotelling_test(m, S, 400, [m[0], 1e-6, m[2]])


def test_hotelling_singular_covariance_is_an_error():
    rng = np.random.default_rng(5)
    a = rng.normal(size=300)
    x = np.column_stack([a, 2 * a])
    with pytest.raises(SingularCovariance):
        hotelling_test(x.mean(axis=0), np.cov(x.T), 300, [0.0, 0.0])


# -- bootstrap ---------------------------------------------------------------


def test_bootstrap_constant_samples():
    assert bootstrap_ci(np.full(50, 3.5), B=200) == (3.5, 3.5)


def test_bootstrap_needs_replicates():
    with pytest.raises(ProblemError):
        bootstrap_ci(np.ones(10), B=50)
    with pytest.raises(ProblemError):
        bootstrap_ci(np.ones(0), B=200)


def test_bootstrap_mean_close_to_clt():
    x = np.random.default_rng(6).exponential(size=100_000)
    lo, hi = bootstrap_ci(x, B=1000, level=0.05, seed=1)
    # [p, 1-p] quantiles: a two-sided interval of coverage 1 - 2p.
    clt = stats.norm.ppf(0.95) * x.std(ddof=1) / math.sqrt(len(x))
    assert (hi - lo) / 2 == pytest.approx(clt, rel=0.2)
    assert lo < x.mean() < hi


def test_bootstrap_several_statistics_share_resamples():
    x = np.random.default_rng(7).normal(size=(2000, 2))
    f, g = (lambda m: m[0]), (lambda m: m[0] * m[1])
    both = bootstrap_cis(x, [f, g], B=300, seed=3)
    assert both[0] == bootstrap_ci(x, f, B=300, seed=3)
    assert both[1] == bootstrap_ci(x, g, B=300, seed=3)
