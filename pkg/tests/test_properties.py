"""Property-based checks of invariants that must hold for every input."""

import numpy as np
from hypothesis import assume, given
from hypothesis import strategies as st

from fodewalk.engine import run_block
from fodewalk.estimator import Moments, bootstrap_ci, hotelling_test
from fodewalk.mittag_leffler import mittag_leffler
from fodewalk.model import RobinSpec, build_robin_problem, gen_random_problem, validate_problem
from fodewalk.reference import l1_batch
from fodewalk.rng import RngStream, uniforms
from fodewalk.sampling import ml_sojourn_from_uniforms
from fodewalk.walker import simulate_walk

alphas = st.floats(0.2, 1.0)
seeds = st.integers(0, 2**63 - 1)
open_unit = st.floats(1e-12, 1 - 1e-12)


@given(alphas, st.lists(st.floats(0.0, 100.0), min_size=2, max_size=20))
def test_ml_survival_is_a_decreasing_probability(alpha, xs):
    x = np.sort(np.array(xs))
    s = mittag_leffler(alpha, 1.0, -x)
    assert np.all((s > 0) & (s <= 1.0 + 1e-15))
    assert np.all(np.diff(s) <= 1e-15)


@given(alphas, st.floats(0.01, 100.0), open_unit, open_unit)
def test_sojourns_positive_and_finite(alpha, rate, u, v):
    tau = ml_sojourn_from_uniforms(alpha, rate, u, v)
    assert np.isfinite(tau) and tau > 0


@given(seeds, st.integers(0, 2**40), st.integers(0, 2**40))
def test_uniforms_in_open_interval(seed, stream, pos):
    u = uniforms(seed, stream, np.array([pos, pos + 1]))
    assert np.all((u > 0) & (u < 1))


@given(st.integers(2, 7), seeds, st.integers(0, 1000))
def test_random_problems_are_dominant_and_valid(n, seed, index):
    p = gen_random_problem(n, RngStream(seed, index))
    chain = validate_problem(p)
    assert chain.m_chi < 1.0
    ends = chain.cum[chain.indptr[1:] - 1]
    assert np.all(ends == 1.0)


@given(seeds, st.integers(0, 10**6))
def test_walk_identities(seed, stream):
    p = gen_random_problem(4, RngStream(seed, 1))
    chain = validate_problem(p)
    w = simulate_walk(p, chain, RngStream(seed, stream))
    node, prod = w.grad_u0
    assert prod * p.u0[node] == w.J
    assert {r for r, _ in w.W_A} <= set(w.visited)
    assert set(w.W_alpha) <= set(w.visited)
    b = run_block(p, chain, seed, stream, 1)
    assert b.J[0] == w.J and b.dT[0] == w.dT_term


@given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=60), st.data())
def test_moment_merge_any_partition(xs, data):
    x = np.array(xs)
    cut = data.draw(st.integers(1, len(x) - 1))
    m = Moments.of(x[:cut]).merge(Moments.of(x[cut:]))
    assert m.count == len(x)
    assert np.isclose(m.mean, x.mean(), rtol=1e-12, atol=1e-9)
    assert np.isclose(m.var, x.var(ddof=1), rtol=1e-9, atol=1e-6)


@given(st.integers(2, 6), seeds)
def test_hotelling_accepts_its_own_mean(d, seed):
    x = np.random.default_rng(seed % 2**32).normal(size=(200, d))
    assert hotelling_test(x.mean(axis=0), np.cov(x.T), 200, x.mean(axis=0))


@given(st.floats(-5, 5), st.integers(2, 50))
def test_bootstrap_of_constant(c, n):
    lo, hi = bootstrap_ci(np.full(n, c), B=100)
    assert lo == hi == c


@given(st.integers(3, 12), st.floats(0.1, 2.0), st.floats(-2.0, -0.1), st.lists(st.floats(0.5, 2.0), min_size=11, max_size=11))
def test_robin_interior_rows_conserve(n_x, b1, b2, kappa):
    spec = RobinSpec(n_x=n_x, b1=b1, b2=b2, kappa=tuple(kappa[: n_x - 1]))
    L = -build_robin_problem(spec, 0.1).dense()
    assert np.all(L[1:-1].sum(axis=1) == 0.0)
    assert L[-1].sum() == 0.0


@given(seeds, st.floats(-3, 3), st.floats(-3, 3))
def test_l1_is_linear_in_initial_data(seed, a, b):
    assume(abs(a) + abs(b) > 1e-3)
    p = gen_random_problem(3, RngStream(seed, 0))
    rng = np.random.default_rng(seed % 2**32)
    u, v = rng.uniform(size=3), rng.uniform(size=3)
    A, al, T = p.dense()[None].repeat(3, 0), p.alpha[None].repeat(3, 0), np.full(3, p.T)
    out = l1_batch(A, al, np.stack([u, v, a * u + b * v]), T, 32)
    np.testing.assert_allclose(out[2], a * out[0] + b * out[1], rtol=1e-10, atol=1e-12)
