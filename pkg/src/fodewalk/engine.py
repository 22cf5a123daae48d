"""Vectorised walk engine: a contiguous block of walks advanced in lockstep.

Walk ``j`` of a block uses stream ``first_stream + j``. All walks still in
flight take one step per loop iteration; a step consumes a fixed number of
draws from the walk's stream (sojourn uniforms followed by one jump
uniform), so the random numbers a walk sees do not depend on how many
other walks share its block. The final step's jump uniform drives the
extra jump of the time-sensitivity estimator.

Sensitivity weights are held densely per walk over the structural entries
of ``A`` (diagonal first, then off-diagonals in CSR order), which is
``O(n + nnz)`` per walk and independent of the number of jumps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fodewalk.errors import ProblemError
from fodewalk.mittag_leffler import log_derivatives, mittag_leffler
from fodewalk.model import EmbeddedChain, FodeProblem, Mode
from fodewalk.rng import uniforms
from fodewalk.sampling import exp_sojourn_from_uniforms, jump_from_uniforms, ml_sojourn_from_uniforms
from fodewalk.walker import TAU_FLOOR, Proposal, _final_weight, _hazard, _interior_weight


@dataclass
class BlockResult:
    """Per-walk outputs of one block, indexed by position in the block."""

    J: np.ndarray
    prod: np.ndarray
    final_node: np.ndarray
    dT: np.ndarray
    jumps: np.ndarray
    draws: np.ndarray
    W_A: np.ndarray | None = None
    W_alpha: np.ndarray | None = None
    visited: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.J)

    def grad_u0_dense(self, n: int) -> np.ndarray:
        out = np.zeros((len(self.J), n))
        out[np.arange(len(self.J)), self.final_node] = self.prod
        return out


def run_block(
    p: FodeProblem,
    chain: EmbeddedChain,
    seed: int,
    first_stream: int,
    count: int,
    mode: Mode = "simplified",
    proposal: Proposal = "exponential",
    sensitivities: bool = True,
    track_visited: bool = False,
) -> BlockResult:
    """Simulate walks ``first_stream .. first_stream + count - 1``.

    ``sensitivities`` switches off the weight bookkeeping (simplified mode
    only); general mode never produces weights.
    """
    if mode not in ("simplified", "general"):
        raise ProblemError(f"unknown mode {mode!r}")
    n = p.n
    T = p.T
    general = mode == "general"
    exp_prop = general and proposal == "exponential"
    if general and proposal == "ml" and np.any(p.diag >= 0):
        raise ProblemError("the Mittag-Leffler proposal needs a negative diagonal")
    sens = sensitivities and not general
    lam = float(np.max(np.abs(p.diag)))
    per_step = 2 if exp_prop else 3

    streams = np.arange(first_stream, first_stream + count, dtype=np.uint64)
    node = np.full(count, p.start_node, dtype=np.int64)
    t = np.zeros(count)
    prod = np.ones(count)
    jumps = np.zeros(count, dtype=np.int64)
    steps = np.zeros(count, dtype=np.int64)
    J = np.zeros(count)
    dT = np.zeros(count)
    unused_jump = np.zeros(count, dtype=np.int64)
    WA = np.zeros((count, n + len(p.data))) if sens else None
    Wal = np.zeros((count, n)) if sens else None
    visited = None
    if track_visited:
        visited = np.zeros((count, n), dtype=bool)
        visited[:, p.start_node] = True

    diag = np.asarray(p.diag)
    alpha_v = np.asarray(p.alpha)
    u0 = np.asarray(p.u0)
    inv_data = 1.0 / np.asarray(p.data) if len(p.data) else np.zeros(0)

    active = np.arange(count)
    while active.size:
        nd = node[active]
        st = streams[active]
        base = (steps[active] * per_step).astype(np.uint64)
        steps[active] += 1
        a = diag[nd]
        al = alpha_v[nd]
        u = uniforms(seed, st, base)
        if exp_prop:
            tau = exp_sojourn_from_uniforms(lam, u)
            rho = uniforms(seed, st, base + np.uint64(1))
        else:
            v = uniforms(seed, st, base + np.uint64(1))
            rho = uniforms(seed, st, base + np.uint64(2))
            tau = ml_sojourn_from_uniforms(al, -a, u, v)
        t_old = t[active]
        done = t_old + tau >= T

        # -- walks whose current sojourn outlasts the horizon
        if done.any():
            fin = active[done]
            m = nd[done]
            absorbing_m = chain.absorbing[m]
            if general:
                if exp_prop:
                    prod[fin] *= _final_weight(al[done], a[done], T - t_old[done], lam)
            else:
                tau_star = np.maximum(T - t_old[done], TAU_FLOOR * T)
                if sens:
                    d_rate, d_alpha, surv = log_derivatives(al[done], a[done], tau_star, "survival")
                    WA[fin, m] += d_rate
                    Wal[fin, m] += d_alpha
                else:
                    surv = mittag_leffler(al[done], 1.0, a[done] * np.exp(al[done] * np.log(tau_star)))
                unit = al[done] == 1.0
                rate = np.where(unit, -a[done], _hazard(al[done], a[done], tau_star, surv))
            J[fin] = prod[fin] * u0[m]
            unused_jump[fin] = absorbing_m
            if not general:
                j_plus = np.zeros(len(fin))
                live = ~absorbing_m
                if live.any():
                    e = jump_from_uniforms(chain.indptr, chain.cum, m[live], rho[done][live])
                    j_plus[live] = prod[fin[live]] * chain.chi[e] * u0[chain.cols[e]]
                dT[fin] = rate * (j_plus - J[fin])

        # -- walks that jump before the horizon
        cont = ~done
        if not cont.any():
            break
        ac = active[cont]
        nd_c = nd[cont]
        jumps[ac] += 1
        dead = chain.absorbing[nd_c]
        if dead.any():
            # Annihilation: J stays 0, prod is zeroed for the u0-gradient.
            prod[ac[dead]] = 0.0
            unused_jump[ac[dead]] = 1
            go = ~dead
            ac, nd_c = ac[go], nd_c[go]
            sel = np.flatnonzero(cont)[go]
        else:
            sel = np.flatnonzero(cont)
        if ac.size == 0:
            break
        e = jump_from_uniforms(chain.indptr, chain.cum, nd_c, rho[sel])
        tau_c = tau[sel]
        if sens:
            WA[ac, n + e] += inv_data[e]
            d_rate, d_alpha, _ = log_derivatives(al[sel], a[sel], tau_c, "density")
            WA[ac, nd_c] += d_rate
            Wal[ac, nd_c] += np.log(tau_c) + d_alpha
        if exp_prop:
            prod[ac] *= _interior_weight(al[sel], a[sel], tau_c, lam)
        prod[ac] *= chain.chi[e]
        t[ac] = t_old[sel] + tau_c
        node[ac] = chain.cols[e]
        if visited is not None:
            visited[ac, node[ac]] = True
        active = ac

    draws = steps * per_step - unused_jump
    return BlockResult(J, prod, node, dT, jumps, draws, WA, Wal, visited)


def entry_keys(p: FodeProblem) -> list[tuple[int, int]]:
    """``(row, col)`` for each weight column of :class:`BlockResult.W_A`."""
    return p.entries()
