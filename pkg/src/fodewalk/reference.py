"""Deterministic oracles: the L1 scheme, finite-difference sensitivities, ``expm``.

The L1 scheme replaces the Caputo derivative at ``t_n`` by::

    c_i * sum_{j=1..n} w_{n-j} (u_i^j - u_i^{j-1}),
    c_i = dt^(-alpha_i) / Gamma(2 - alpha_i),  w_m = (m+1)^(1-alpha_i) - m^(1-alpha_i)

and solves the implicit step ``(C - A) u^n = C u^{n-1} - H^n`` (in its
increment form ``(C - A)(u^n - u^{n-1}) = A u^{n-1} - H^n``) with the
history term ``H^n_i = c_i sum_{j<n} w_{n-j} (u_i^j - u_i^{j-1})``. Its error
at a fixed time is first order in ``dt``; :class:`L1Config` can remove that
term by Richardson extrapolation over ``N_t`` and ``2 N_t``.

Many related systems (the finite-difference perturbations of one problem)
are stepped together: the history sums are matrix-vector products over
columns sharing an exponent, and each system's step matrix is inverted once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.integrate import solve_ivp
from scipy.special import gamma

from fodewalk.errors import ProblemError, SingularSystem
from fodewalk.model import FodeProblem


@dataclass(frozen=True)
class L1Config:
    """Time grid of the L1 solver.

    With ``richardson`` set, results are ``2 u(2 N_t) - u(N_t)``.
    """

    N_t: int = 4096
    richardson: bool = False

    def __post_init__(self) -> None:
        if self.N_t < 1:
            raise ValueError("N_t must be positive")


def l1_weights(alpha: float, count: int) -> np.ndarray:
    """``w_m = (m+1)^(1-alpha) - m^(1-alpha)`` for ``m = 0..count-1``."""
    m = np.arange(count, dtype=float)
    return (m + 1.0) ** (1.0 - alpha) - m ** (1.0 - alpha)


def l1_factor(alpha, dt):
    """Diagonal factor ``dt^(-alpha) / Gamma(2 - alpha)``."""
    alpha = np.asarray(alpha, dtype=float)
    return np.asarray(dt, dtype=float) ** (-alpha) / gamma(2.0 - alpha)


@dataclass
class ReferenceSolution:
    """L1 trajectory on ``t_0..t_{N_t}`` plus optional sensitivities of ``u(T)``."""

    t: np.ndarray
    u: np.ndarray
    config: L1Config
    sensitivities: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.u[-1]


_MAX_GROUPS = 16


def _check_batch(alpha: np.ndarray, T: np.ndarray) -> None:
    if np.any(~((alpha > 0) & (alpha <= 1))):
        raise ProblemError("L1 exponents must lie in (0, 1]")
    if np.any(~(T > 0)):
        raise ProblemError("final time must be positive")


def l1_batch(A, alpha, u0, T, N_t: int, trajectory: bool = False) -> np.ndarray:
    """Step ``B`` systems at once.

    ``A`` has shape ``(B, n, n)``, ``alpha`` and ``u0`` ``(B, n)``, ``T``
    ``(B,)``. Returns ``u(T)`` with shape ``(B, n)``, or the whole trajectory
    ``(N_t + 1, B, n)`` when ``trajectory`` is set.
    """
    A = np.asarray(A, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    T = np.asarray(T, dtype=float)
    B, n = alpha.shape
    _check_batch(alpha, T)
    dt = T / N_t
    c = l1_factor(alpha, dt[:, None])
    step = c[:, :, None] * np.eye(n) - A
    try:
        cond = np.linalg.cond(step)
        if np.any(~np.isfinite(cond)) or np.any(cond > 1e14):
            raise np.linalg.LinAlgError("ill-conditioned step matrix")
        M = np.linalg.inv(step)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"implicit L1 step matrix is singular: {exc}") from exc

    # Columns are permuted so that equal exponents form contiguous slices.
    flat_alpha = alpha.ravel()
    uniq, group = np.unique(flat_alpha, return_inverse=True)
    perm = np.argsort(group, kind="stable")
    inv_perm = np.empty_like(perm)
    inv_perm[perm] = np.arange(len(perm))
    bounds = np.searchsorted(group[perm], np.arange(len(uniq) + 1))
    slices = [(int(bounds[g]), int(bounds[g + 1])) for g in range(len(uniq))]
    W = np.stack([l1_weights(a, N_t + 1) for a in uniq])

    K = B * n
    cflat = c.ravel()[perm]
    u = u0.ravel()[perm].copy()
    dU = np.zeros((N_t + 1, K))
    traj = None
    if trajectory:
        traj = np.empty((N_t + 1, K))
        traj[0] = u
    H = np.zeros(K)
    # Few distinct exponents: one gemv per exponent group. Many: a single
    # elementwise product against per-column weights.
    per_column = len(uniq) > _MAX_GROUPS
    if per_column:
        Wcol = W[group[perm]].T.copy()
    for s in range(1, N_t + 1):
        if s > 1:
            hist = dU[1:s]
            if per_column:
                H = np.einsum("jk,jk->k", Wcol[s - 1 : 0 : -1], hist)
            else:
                for g, (lo, hi) in enumerate(slices):
                    H[lo:hi] = W[g, s - 1 : 0 : -1] @ hist[:, lo:hi]
            H *= cflat
        # Increment form of the step: (C - A)(u^n - u^{n-1}) = A u^{n-1} - H^n.
        Au = np.einsum("bij,bj->bi", A, u[inv_perm].reshape(B, n)).ravel()[perm]
        rhs = (Au - H)[inv_perm].reshape(B, n)
        delta = np.einsum("bij,bj->bi", M, rhs).ravel()[perm]
        dU[s] = delta
        u = u + delta
        if traj is not None:
            traj[s] = u
    if traj is not None:
        return traj[:, inv_perm].reshape(N_t + 1, B, n)
    return u[inv_perm].reshape(B, n)


def _final_batch(A, alpha, u0, T, cfg: L1Config) -> np.ndarray:
    coarse = l1_batch(A, alpha, u0, T, cfg.N_t)
    if not cfg.richardson:
        return coarse
    fine = l1_batch(A, alpha, u0, T, 2 * cfg.N_t)
    return 2.0 * fine - coarse


def l1_solve(p: FodeProblem, cfg: L1Config = L1Config()) -> ReferenceSolution:
    """L1 trajectory of ``p`` on a uniform grid of ``cfg.N_t`` steps."""
    args = (p.dense()[None], p.alpha[None], p.u0[None], np.array([p.T]))
    traj = l1_batch(*args, cfg.N_t, trajectory=True)[:, 0]
    if cfg.richardson:
        fine = l1_batch(*args, 2 * cfg.N_t, trajectory=True)[::2, 0]
        traj = 2.0 * fine - traj
    return ReferenceSolution(np.linspace(0.0, p.T, cfg.N_t + 1), traj, cfg)


def fd_step(theta: float) -> float:
    return float(np.sqrt(np.finfo(float).eps) * max(1.0, abs(theta)))


@dataclass
class SensitivityTable:
    """``u(T)`` and central-difference derivatives of every component of it.

    ``dA[:, j, k]`` is ``du(T)/da_jk``; ``dalpha[:, j]``, ``du0[:, j]`` and
    ``dT`` are laid out the same way.
    """

    u: np.ndarray
    dA: np.ndarray | None = None
    dalpha: np.ndarray | None = None
    du0: np.ndarray | None = None
    dT: np.ndarray | None = None
    solver_calls: int = 0


def fd_sensitivities(
    p: FodeProblem, cfg: L1Config = L1Config(), targets=("A", "alpha", "u0", "T")
) -> SensitivityTable:
    """Central differences ``(f(theta+h) - f(theta-h)) / 2h`` of the L1 solution.

    ``h = sqrt(eps) max(1, |theta|)``. Perturbing ``T`` keeps ``N_t`` fixed,
    so the step size moves with it. All perturbed systems are solved as
    one batch.
    """
    n = p.n
    A0, al0, u00, T0 = p.dense(), np.array(p.alpha), np.array(p.u0), p.T
    As, als, u0s, Ts, tags = [A0], [al0], [u00], [T0], [None]

    def add(tag, h, A=A0, al=al0, u0=u00, T=T0):
        As.append(A)
        als.append(al)
        u0s.append(u0)
        Ts.append(T)
        tags.append((tag, h))

    if "A" in targets:
        for j in range(n):
            for k in range(n):
                h = fd_step(A0[j, k])
                for sgn in (1.0, -1.0):
                    A = A0.copy()
                    A[j, k] += sgn * h
                    add(("A", j, k, sgn), h, A=A)
    if "alpha" in targets:
        for j in range(n):
            h = fd_step(al0[j])
            if al0[j] + h > 1.0:
                raise ProblemError(f"exponent of row {j + 1} too close to 1 for a central difference", j)
            for sgn in (1.0, -1.0):
                al = al0.copy()
                al[j] += sgn * h
                add(("alpha", j, sgn), h, al=al)
    if "u0" in targets:
        for j in range(n):
            h = fd_step(u00[j])
            for sgn in (1.0, -1.0):
                u0 = u00.copy()
                u0[j] += sgn * h
                add(("u0", j, sgn), h, u0=u0)
    if "T" in targets:
        h = fd_step(T0)
        for sgn in (1.0, -1.0):
            add(("T", sgn), h, T=T0 + sgn * h)

    U = _final_batch(np.stack(As), np.stack(als), np.stack(u0s), np.array(Ts), cfg)
    table = SensitivityTable(u=U[0], solver_calls=len(As))
    if "A" in targets:
        table.dA = np.zeros((n, n, n))
    if "alpha" in targets:
        table.dalpha = np.zeros((n, n))
    if "u0" in targets:
        table.du0 = np.zeros((n, n))
    for row, tag in zip(U[1:], tags[1:]):
        (key, h) = tag
        contrib = row / (2.0 * h) * key[-1]
        if key[0] == "A":
            table.dA[:, key[1], key[2]] += contrib
        elif key[0] == "alpha":
            table.dalpha[:, key[1]] += contrib
        elif key[0] == "u0":
            table.du0[:, key[1]] += contrib
        else:
            table.dT = contrib if table.dT is None else table.dT + contrib
    return table


def expm_oracle(A, u0, T: float) -> np.ndarray:
    """``exp(A T) u0`` by scaling and squaring with Pade approximants."""
    A = np.asarray(A, dtype=float)
    return linalg.expm(A * T) @ np.asarray(u0, dtype=float)


def ode_oracle(A, u0, T: float) -> np.ndarray:
    """Classical ``u' = A u`` integrated with an 8th-order Runge-Kutta method."""
    A = np.asarray(A, dtype=float)
    sol = solve_ivp(lambda _t, y: A @ y, (0.0, T), np.asarray(u0, dtype=float), method="DOP853", rtol=1e-13, atol=1e-15)
    return sol.y[:, -1]
