"""A single continuous-time random walk and its sensitivity weights.

This is the readable, one-walk-at-a-time implementation. The estimator runs
the vectorised engine in :mod:`fodewalk.engine`, which consumes the same
random streams in the same order and is tested against this module.

Simplified mode (every ``a_ii < 0``): the walk holds at node ``i`` for a
Mittag-Leffler time with exponent ``alpha_i`` and rate ``-a_ii``, jumps to
``k`` with probability ``|a_ik| / sum_j |a_ij|`` and multiplies its running
product by ``chi(i, k)``. When the accumulated time reaches ``T`` at node
``m``, the functional is ``J = prod * u0[m]``.

Each interior event (node ``i``, holding time ``tau``, successor ``k``)
adds the score of its log-density to the weights::

    W_A[i, k]    += 1 / a_ik
    W_A[i, i]    += d/da_ii log E_{a,a}(a_ii tau^a)
    W_alpha[i]   += log(tau) + d/dalpha log E_{a,a}(a_ii tau^alpha)

The ``+-1/a_ii`` contributions of the density prefactor and of ``chi``
cancel, which is why only the Mittag-Leffler log-derivative remains on the
diagonal. The surviving final interval ``tau*`` at node ``m`` contributes
the log-derivatives of ``E_alpha(a_mm tau*^alpha)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from fodewalk.errors import MLDomainError, ProblemError, SingularHazard
from fodewalk.mittag_leffler import log_derivatives, mittag_leffler
from fodewalk.model import EmbeddedChain, FodeProblem, Mode
from fodewalk.rng import RngStream
from fodewalk.sampling import SojournLaw, exp_sojourn_from_uniforms, ml_sojourn_from_uniforms, sample_jump

Proposal = Literal["exponential", "ml"]

#: Relative floor applied to the surviving interval before the hazard is evaluated.
TAU_FLOOR = 1e-12


@dataclass
class WalkOutcome:
    """Everything one walk contributes to the estimators.

    ``W_A`` maps ``(row, col)`` to its accumulated weight and ``W_alpha``
    maps nodes to theirs; the gradient estimators are ``J * W``.
    ``grad_u0`` is ``(final node, running chi product)``.
    """

    J: float
    grad_u0: tuple[int, float]
    W_A: dict[tuple[int, int], float] = field(default_factory=dict)
    W_alpha: dict[int, float] = field(default_factory=dict)
    dT_term: float = 0.0
    jumps: int = 0
    elapsed_rng_draws: int = 0
    visited: frozenset = frozenset()

    @property
    def grad_A(self) -> dict[tuple[int, int], float]:
        return {key: self.J * w for key, w in self.W_A.items()}

    @property
    def grad_alpha(self) -> dict[int, float]:
        return {key: self.J * w for key, w in self.W_alpha.items()}

    @property
    def grad_T(self) -> float:
        return self.dT_term


def hazard(alpha: float, a: float, tau_star: float) -> float:
    """Density-over-survival rate of the sojourn law after ``tau_star`` has elapsed."""
    if not a < 0:
        raise MLDomainError(f"rate argument a must be negative, got {a!r}")
    if tau_star < 0:
        raise MLDomainError("elapsed time must be non-negative")
    if alpha == 1.0:
        return -a
    if tau_star == 0.0:
        raise SingularHazard("hazard diverges at zero elapsed time for alpha < 1")
    return float(_hazard(alpha, a, tau_star))


def _hazard(alpha, a, tau, surv=None):
    tpow = np.exp(alpha * np.log(tau))
    dens = mittag_leffler(alpha, alpha, a * tpow)
    if surv is None:
        surv = mittag_leffler(alpha, 1.0, a * tpow)
    return -a * tpow / tau * dens / surv


def _sojourn(alpha: float, rate: float, rng: RngStream) -> float:
    u = rng.uniform()
    v = rng.uniform()
    return float(ml_sojourn_from_uniforms(alpha, rate, u, v))


def simulate_walk(
    p: FodeProblem,
    chain: EmbeddedChain,
    rng: RngStream,
    mode: Mode = "simplified",
    proposal: Proposal = "exponential",
) -> WalkOutcome:
    """Run one walk from ``p.start_node`` on ``rng``.

    In general mode only ``J`` (and ``grad_u0``) is produced; the weights
    are left empty. ``proposal`` selects the general-mode holding-time law:
    one exponential with rate ``max |a_ii|``, or each node's own
    Mittag-Leffler law (which makes every importance weight 1).
    """
    if mode == "simplified":
        return _walk_simplified(p, chain, rng)
    if mode == "general":
        return _walk_general(p, chain, rng, proposal)
    raise ProblemError(f"unknown mode {mode!r}")


def _walk_simplified(p: FodeProblem, chain: EmbeddedChain, rng: RngStream) -> WalkOutcome:
    node = p.start_node
    t = 0.0
    prod = 1.0
    jumps = 0
    W_A: dict[tuple[int, int], float] = {}
    W_alpha: dict[int, float] = {}
    visited = {node}
    start_pos = rng.position
    while True:
        a_ii = float(p.diag[node])
        alpha = float(p.alpha[node])
        tau = _sojourn(alpha, -a_ii, rng)
        if t + tau >= p.T:
            break
        jumps += 1
        if chain.absorbing[node]:
            # No successor: the walk is annihilated and contributes zero.
            return WalkOutcome(0.0, (node, 0.0), W_A, W_alpha, 0.0, jumps, rng.position - start_pos, frozenset(visited))
        pos = int(chain.indptr[node]) + sample_jump(chain.row_cumprobs(node), rng)
        k = int(chain.cols[pos])
        d_rate, d_alpha, _ = log_derivatives(alpha, a_ii, tau, "density")
        W_A[(node, k)] = W_A.get((node, k), 0.0) + 1.0 / float(p.data[pos])
        W_A[(node, node)] = W_A.get((node, node), 0.0) + float(d_rate)
        W_alpha[node] = W_alpha.get(node, 0.0) + (float(np.log(tau)) + float(d_alpha))
        prod *= float(chain.chi[pos])
        t += tau
        node = k
        visited.add(node)

    m = node
    a_mm = float(p.diag[m])
    alpha = float(p.alpha[m])
    tau_star = max(p.T - t, TAU_FLOOR * p.T)
    d_rate, d_alpha, surv = log_derivatives(alpha, a_mm, tau_star, "survival")
    W_A[(m, m)] = W_A.get((m, m), 0.0) + float(d_rate)
    W_alpha[m] = W_alpha.get(m, 0.0) + float(d_alpha)
    J = prod * float(p.u0[m])

    rate = -a_mm if alpha == 1.0 else float(_hazard(alpha, a_mm, tau_star, surv))
    if chain.absorbing[m]:
        j_plus = 0.0
    else:
        pos = int(chain.indptr[m]) + sample_jump(chain.row_cumprobs(m), rng)
        j_plus = prod * float(chain.chi[pos]) * float(p.u0[chain.cols[pos]])
    dT = rate * (j_plus - J)
    return WalkOutcome(J, (m, prod), W_A, W_alpha, dT, jumps, rng.position - start_pos, frozenset(visited))


def _walk_general(p: FodeProblem, chain: EmbeddedChain, rng: RngStream, proposal: Proposal) -> WalkOutcome:
    lam = float(np.max(np.abs(p.diag)))
    node = p.start_node
    t = 0.0
    prod = 1.0
    jumps = 0
    visited = {node}
    start_pos = rng.position
    while True:
        a_ii = float(p.diag[node])
        alpha = float(p.alpha[node])
        if proposal == "ml":
            if a_ii >= 0:
                raise ProblemError("the Mittag-Leffler proposal needs a negative diagonal", node)
            tau = _sojourn(alpha, -a_ii, rng)
        else:
            tau = float(exp_sojourn_from_uniforms(lam, rng.uniform()))
        if t + tau >= p.T:
            break
        jumps += 1
        if chain.absorbing[node]:
            return WalkOutcome(0.0, (node, 0.0), jumps=jumps, elapsed_rng_draws=rng.position - start_pos, visited=frozenset(visited))
        pos = int(chain.indptr[node]) + sample_jump(chain.row_cumprobs(node), rng)
        if proposal == "exponential":
            prod *= float(_interior_weight(alpha, a_ii, tau, lam))
        prod *= float(chain.chi[pos])
        t += tau
        node = int(chain.cols[pos])
        visited.add(node)
    m = node
    tau_star = p.T - t
    if proposal == "exponential":
        prod *= float(_final_weight(float(p.alpha[m]), float(p.diag[m]), tau_star, lam))
    if not chain.absorbing[m]:
        rng.uniform()  # same draw pattern as simplified mode, which draws an extra jump here
    J = prod * float(p.u0[m])
    return WalkOutcome(J, (m, prod), jumps=jumps, elapsed_rng_draws=rng.position - start_pos, visited=frozenset(visited))


def _interior_weight(alpha, a, tau, lam):
    """Density ``-a tau^(alpha-1) E_{alpha,alpha}(a tau^alpha)`` over ``lam exp(-lam tau)``."""
    tpow = np.exp(alpha * np.log(tau))
    dens = -a * tpow / tau * mittag_leffler(alpha, alpha, a * tpow)
    return dens * np.exp(lam * tau) / lam


def _final_weight(alpha, a, tau_star, lam):
    """Survival ``E_alpha(a tau*^alpha)`` over ``exp(-lam tau*)``."""
    return mittag_leffler(alpha, 1.0, a * np.exp(alpha * np.log(tau_star))) * np.exp(lam * tau_star)


def sojourn_law(p: FodeProblem, node: int) -> SojournLaw:
    return SojournLaw(float(p.alpha[node]), -float(p.diag[node]))
