import math

import numpy as np
import pytest

from fodewalk.engine import run_block
from fodewalk.errors import MLDomainError, ProblemError, SingularHazard
from fodewalk.mittag_leffler import ml_eval
from fodewalk.model import FodeProblem, gen_random_problem, validate_problem
from fodewalk.rng import RngStream
from fodewalk.walker import hazard, simulate_walk


@pytest.fixture(scope="module")
def random5():
    return gen_random_problem(5, RngStream(2024, 7))


def sparse_problem():
    A = np.array(
        [
            [-3.0, 1.0, 0.0, -0.5],
            [0.0, -2.0, 1.5, 0.0],
            [0.0, 0.0, -1.0, 0.0],  # absorbing row
            [0.7, 0.0, -0.4, -4.0],
        ]
    )
    return FodeProblem.from_dense(A, [0.65, 0.8, 0.9, 0.75], [1.0, -0.4, 0.3, 0.8], 0.9)


@pytest.mark.parametrize("make", ["random", "sparse"])
def test_engine_bit_identical_to_scalar_walker(make, random5):
    p = random5 if make == "random" else sparse_problem()
    chain = validate_problem(p)
    seed, first, count = 99, 17, 300
    block = run_block(p, chain, seed, first, count, track_visited=True)
    keys = p.entries()
    for j in range(count):
        w = simulate_walk(p, chain, RngStream(seed, first + j))
        assert w.J == block.J[j]
        assert w.dT_term == block.dT[j]
        assert w.jumps == block.jumps[j]
        assert w.elapsed_rng_draws == block.draws[j]
        assert (w.grad_u0[0], w.grad_u0[1]) == (block.final_node[j], block.prod[j])
        dense_A = np.zeros(len(keys))
        for key, val in w.W_A.items():
            dense_A[keys.index(key)] = val
        assert np.array_equal(dense_A, block.W_A[j])
        dense_alpha = np.zeros(p.n)
        for key, val in w.W_alpha.items():
            dense_alpha[key] = val
        assert np.array_equal(dense_alpha, block.W_alpha[j])
        assert set(np.flatnonzero(block.visited[j])) == set(w.visited)


def test_draw_count_matches_stream_position(random5):
    chain = validate_problem(random5)
    for s in range(50):
        rng = RngStream(5, s)
        w = simulate_walk(random5, chain, rng)
        assert w.elapsed_rng_draws == rng.position
        assert w.elapsed_rng_draws == 3 * (w.jumps + 1)


def test_block_results_independent_of_block_split(random5):
    chain = validate_problem(random5)
    whole = run_block(random5, chain, 3, 0, 200)
    a = run_block(random5, chain, 3, 0, 73)
    b = run_block(random5, chain, 3, 73, 127)
    assert np.array_equal(whole.J, np.concatenate([a.J, b.J]))
    assert np.array_equal(whole.W_A, np.concatenate([a.W_A, b.W_A]))


def test_general_mode_with_own_laws_equals_simplified(random5):
    chain = validate_problem(random5, "general")
    s = run_block(random5, chain, 8, 0, 500)
    g = run_block(random5, chain, 8, 0, 500, mode="general", proposal="ml")
    assert np.array_equal(s.J, g.J)
    assert g.W_A is None
    for j in range(20):
        w = simulate_walk(random5, chain, RngStream(8, j), "general", "ml")
        assert w.J == g.J[j] and not w.W_A


def test_general_exponential_engine_matches_scalar():
    A = np.array([[-2.0, 1.0], [0.5, 0.3]])
    p = FodeProblem.from_dense(A, [0.7, 0.9], [1.0, 2.0], 0.5)
    chain = validate_problem(p, "general")
    b = run_block(p, chain, 4, 0, 200, mode="general")
    for j in range(200):
        w = simulate_walk(p, chain, RngStream(4, j), "general")
        assert w.J == b.J[j] and w.elapsed_rng_draws == b.draws[j]


def test_ml_proposal_rejects_positive_diagonal():
    p = FodeProblem.from_dense([[-2.0, 1.0], [0.5, 0.3]], 0.7, [1.0, 1.0], 0.5)
    chain = validate_problem(p, "general")
    with pytest.raises(ProblemError):
        run_block(p, chain, 0, 0, 10, mode="general", proposal="ml")


def test_single_node_outcomes():
    p = FodeProblem.from_dense([[-1.0]], [0.7], [2.0], 1.0)
    chain = validate_problem(p)
    for s in range(200):
        w = simulate_walk(p, chain, RngStream(1, s))
        if w.jumps == 0:
            assert w.J == 2.0
            assert w.dT_term == pytest.approx(-hazard(0.7, -1.0, 1.0) * 2.0)
            assert w.elapsed_rng_draws == 2
        else:
            assert w.J == 0.0 and w.grad_u0[1] == 0.0 and w.jumps == 1


def test_grad_u0_identity_and_sparsity(random5):
    p = sparse_problem()
    chain = validate_problem(p)
    b = run_block(p, chain, 12, 0, 5000, track_visited=True)
    np.testing.assert_allclose(b.grad_u0_dense(p.n) @ p.u0, b.J, rtol=1e-12, atol=0)
    rows = np.array([r for r, _ in p.entries()])
    touched = b.W_A != 0
    assert np.all(~touched | b.visited[:, rows])
    assert np.all((b.W_alpha == 0) | b.visited)


def test_hazard_properties():
    assert hazard(1.0, -3.0, 0.7) == 3.0
    h = [hazard(0.6, -2.0, t) for t in (0.01, 0.1, 1.0, 10.0)]
    assert all(x > y for x, y in zip(h, h[1:]))
    t, eps = 0.4, 1e-6
    logS = lambda s: math.log(ml_eval(0.6, 1.0, -2.0 * s**0.6).value)
    assert hazard(0.6, -2.0, t) == pytest.approx(-(logS(t + eps) - logS(t - eps)) / (2 * eps), rel=1e-6)
    with pytest.raises(SingularHazard):
        hazard(0.6, -2.0, 0.0)
    with pytest.raises(MLDomainError):
        hazard(0.6, 2.0, 0.1)


def test_unknown_mode():
    p = sparse_problem()
    with pytest.raises(ProblemError):
        simulate_walk(p, validate_problem(p), RngStream(0, 0), "fancy")
