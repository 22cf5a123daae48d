"""Sojourn-time and jump samplers used by the walks."""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from fodewalk.errors import MLDomainError, StructuralError
from fodewalk.rng import RngStream

#: Uniform draws consumed by one Mittag-Leffler sojourn.
ML_DRAWS = 2
#: Uniform draws consumed by one exponential sojourn.
EXP_DRAWS = 1


@dataclass(frozen=True)
class SojournLaw:
    """Holding-time law with survival ``E_alpha(-rate t^alpha)`` or ``exp(-rate t)``."""

    alpha: float
    rate: float
    kind: Literal["mittag_leffler", "exponential"] = "mittag_leffler"

    def __post_init__(self) -> None:
        if not self.rate > 0:
            raise MLDomainError(f"sojourn rate must be positive, got {self.rate!r}")
        if self.kind == "mittag_leffler" and not 0 < self.alpha <= 1:
            raise MLDomainError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if self.kind not in ("mittag_leffler", "exponential"):
            raise ValueError(f"unknown sojourn kind {self.kind!r}")

    def survival(self, t):
        from fodewalk.mittag_leffler import mittag_leffler

        t = np.asarray(t, dtype=float)
        if self.kind == "exponential":
            return np.exp(-self.rate * t)
        return mittag_leffler(self.alpha, 1.0, -self.rate * t**self.alpha)


def ml_sojourn_from_uniforms(alpha, rate, u, v):
    """Mittag-Leffler variates from two independent uniform arrays.

    Uses ``tau = -log(u) / rate**(1/alpha) * (sin(a pi (1-v)) / sin(a pi v))**(1/alpha)``,
    which equals the usual ``sin(a pi)/tan(a pi v) - cos(a pi)`` form without
    its cancellation near ``alpha = 1``. Entries with ``alpha == 1`` reduce
    to the exponential ``-log(u) / rate`` (``v`` is still consumed).
    """
    alpha = np.asarray(alpha, dtype=float)
    rate = np.asarray(rate, dtype=float)
    e = -np.log(u)
    api = alpha * np.pi
    ratio = np.sin(api * (1.0 - v)) / np.sin(api * v)
    inv = 1.0 / alpha
    tau = e * np.exp(inv * (np.log(ratio) - np.log(rate)))
    return np.where(alpha == 1.0, e / rate, tau)


def exp_sojourn_from_uniforms(rate, u):
    return -np.log(u) / rate


def sample_sojourn(law: SojournLaw, rng: RngStream) -> float:
    """Draw one holding time, consuming two uniforms (ML) or one (exponential)."""
    if law.kind == "exponential":
        return float(exp_sojourn_from_uniforms(law.rate, rng.uniform()))
    u = rng.uniform()
    v = rng.uniform()
    return float(ml_sojourn_from_uniforms(law.alpha, law.rate, u, v))


def sample_jump(row_cumprobs: Sequence[float], rng: RngStream) -> int:
    """Position of the successor in a row of cumulative jump probabilities.

    Returns the first index whose cumulative probability exceeds a uniform
    draw, found by bisection.
    """
    if len(row_cumprobs) == 0:
        raise StructuralError("row has no off-diagonal mass; no successor can be drawn")
    rho = rng.uniform()
    k = bisect_right(row_cumprobs, rho)
    return min(k, len(row_cumprobs) - 1)


def jump_from_uniforms(indptr: np.ndarray, cum: np.ndarray, rows: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Vectorised bisection over CSR cumulative rows; returns flat edge positions.

    Every row in ``rows`` must be non-empty. The result for each entry is the
    first position ``j`` in ``indptr[row]:indptr[row+1]`` with ``cum[j] > rho``.
    """
    lo = indptr[rows].copy()
    hi = indptr[rows + 1] - 1
    # Invariant: the answer lies in [lo, hi]; cum[hi] == 1 > rho always.
    steps = int(math.ceil(math.log2(max(int((hi - lo).max(initial=0)) + 1, 1)))) + 1
    for _ in range(steps):
        active = lo < hi
        if not active.any():
            break
        mid = (lo + hi) // 2
        go_right = cum[mid] <= rho
        lo = np.where(active & go_right, mid + 1, lo)
        hi = np.where(active & ~go_right, mid, hi)
    return lo
