r"""Two-parameter Mittag-Leffler function on the real line.

.. math::

    E_{\alpha,\beta}(z) = \sum_{k \ge 0} \frac{z^k}{\Gamma(\alpha k + \beta)}

For :math:`z < 0` the function is evaluated by numerical inversion of its
Laplace transform

.. math::

    E_{\alpha,\beta}(z) = \frac{1}{2\pi i} \int_{\mathcal{C}}
        \frac{e^s s^{\alpha - \beta}}{s^\alpha - z} \, \mathrm{d}s

with the trapezoidal rule on a parabolic contour around the branch cut of
:math:`s^\alpha`. For :math:`0 < \alpha < 1` and negative :math:`z` the
integrand has no poles on the principal sheet, so a fixed contour converges
geometrically for every negative argument. The partial derivatives in
:math:`z`, :math:`\alpha` and :math:`\beta` are obtained by differentiating
the integrand, so they come out of the same quadrature.

Near the origin (:math:`|z| \le 1/4`) a short truncated series is used
instead: the contour rule is only accurate to a few units of rounding
relative to the value, which is enough to push :math:`E_\alpha(-x)` above 1
for tiny :math:`x`.

The contour sum carries an absolute error of a few ``1e-16``. When
:math:`\alpha` and :math:`\beta` are within :data:`NEAR_UNIT` of 1 the true
value at large :math:`|z|` can be smaller than that, so there the function is
linearised about :math:`\alpha = \beta = 1` instead, which keeps it positive
and relatively accurate to about :math:`1 - \alpha`.

Positive arguments (only met by general-mode problems with positive
diagonal entries) go through the power series, whose terms are all positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy import special

from fodewalk.errors import MLDomainError, MLEvaluationError

Kind = Literal["density", "survival"]

#: Number of trapezoidal nodes on the full contour (half are used, by symmetry).
CONTOUR_NODES = 36
#: Node count used to cross-check :func:`ml_eval`.
CHECK_NODES = 44
#: Relative disagreement between the two contour resolutions that is tolerated.
CHECK_RTOL = 1e-8


@dataclass(frozen=True)
class MLValue:
    """Value of :math:`E_{\\alpha,\\beta}(z)` and its partial derivatives.

    ``d_alpha`` is taken at fixed ``beta`` and fixed ``z``; for the
    :math:`E_{\\alpha,\\alpha}` case the total exponent derivative is
    ``d_alpha + d_beta``.
    """

    value: float
    d_alpha: float = math.nan
    d_beta: float = math.nan
    d_z: float = math.nan


def _check_params(alpha, beta) -> None:
    a = np.asarray(alpha, dtype=float)
    b = np.asarray(beta, dtype=float)
    if np.any(~(a > 0.0)) or np.any(a > 1.0):
        raise MLDomainError(f"alpha must lie in (0, 1], got {alpha!r}")
    if np.any(~(b > 0.0)):
        raise MLDomainError(f"beta must be positive, got {beta!r}")


@lru_cache(maxsize=8)
def _contour(n_nodes: int):
    # Parabolic contour s(t) = N (0.1309 - 0.1194 t^2 + 0.25 i t), t in (-pi, pi).
    # Conjugate symmetry lets us keep the t > 0 half and take imaginary parts.
    h = 2.0 * np.pi / n_nodes
    t = (np.arange(n_nodes // 2) + 0.5) * h
    s = n_nodes * (0.1309 - 0.1194 * t**2 + 0.25j * t)
    ds = n_nodes * (-0.2388 * t + 0.25j)
    weight = np.exp(s) * ds
    return tuple(zip(weight.tolist(), np.log(s).tolist())), h / np.pi


def _contour_eval(alpha, beta, z, derivatives: bool, n_nodes: int = CONTOUR_NODES):
    nodes, scale = _contour(n_nodes)
    same = beta is alpha
    v = np.zeros(np.shape(z))
    if derivatives:
        da = np.zeros_like(v)
        db = np.zeros_like(v)
        dz = np.zeros_like(v)
    for w, ls in nodes:
        sa = np.exp(alpha * ls)
        inv = 1.0 / (sa - z)
        term = w * inv if same else w * np.exp((alpha - beta) * ls) * inv
        v += term.imag
        if derivatives:
            ti = term * inv
            dz += ti.imag
            da += (ti * ls).imag
            db -= (term * ls).imag
    v *= scale
    if not derivatives:
        return v
    dz *= scale
    da *= -z * scale
    db *= scale
    return v, da, db, dz


#: Negative arguments with ``|z|`` at most this go through the short series.
SMALL_Z = 0.25
_SMALL_TERMS = 36


def _small_series(alpha, beta, z, derivatives: bool):
    # |z| <= 1/4 and Gamma(alpha k + beta) >= 0.88, so 36 terms leave a tail
    # below 1e-21. Terms are added one power at a time to keep each element's
    # result independent of how many are evaluated together.
    v = np.zeros_like(z)
    if derivatives:
        da = np.zeros_like(z)
        db = np.zeros_like(z)
        dz = np.zeros_like(z)
    zk = np.ones_like(z)
    for k in range(_SMALL_TERMS):
        arg = alpha * k + beta
        r = special.rgamma(arg)
        term = zk * r
        if derivatives:
            psi_term = special.psi(arg) * term
            db -= psi_term
            da -= k * psi_term
            if k + 1 < _SMALL_TERMS:
                dz += (k + 1) * zk * special.rgamma(arg + alpha)
        v += term
        zk = zk * z
    if not derivatives:
        return v
    return v, da, db, dz


#: Exponents this close to 1 are handled by linearising about the exponential.
NEAR_UNIT = 1e-8


def _near_unit_eval(alpha, beta, z, derivatives: bool):
    ez, da, db, dz = _exp_eval(z, True)
    v = ez + (alpha - 1.0) * da + (beta - 1.0) * db
    if not derivatives:
        return v
    return v, da, db, dz


def _ein(z: np.ndarray) -> np.ndarray:
    # Entire exponential integral Ein(z) = sum_{k>=1} (-1)^(k+1) z^k / (k k!).
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) <= 2.0
    zs = z[small]
    acc = np.zeros_like(zs)
    term = np.ones_like(zs)
    for k in range(1, 40):
        term = term * (-zs) / k
        acc -= term / k
    out[small] = acc
    big = ~small
    zb = z[big]
    pos = zb > 0
    res = np.empty_like(zb)
    res[pos] = special.exp1(zb[pos]) + np.euler_gamma + np.log(zb[pos])
    x = -zb[~pos]
    res[~pos] = -(special.expi(x) - np.euler_gamma - np.log(x))
    out[big] = res
    return out


def _exp_eval(z, derivatives: bool):
    # alpha = beta = 1. The exponent derivatives follow from
    # sum_k psi(k+1) z^k / k! = e^z (Ein(z) - gamma).
    ez = np.exp(z)
    if not derivatives:
        return ez
    base = ez * (_ein(z) - np.euler_gamma)
    db = -base
    da = -(z * base + ez - 1.0)
    return ez, da, db, ez.copy()


def _series_terms(alpha: float, beta: float, z: float, kmax: int):
    k = np.arange(kmax + 1, dtype=float)
    arg = alpha * k + beta
    logz = math.log(abs(z)) if z != 0.0 else -np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        mag = np.where(k == 0, 0.0, k * logz) - special.gammaln(arg)
    sign = np.where((k % 2 == 1) & (z < 0), -1.0, 1.0)
    terms = sign * np.exp(mag)
    return k, arg, terms


def ml_series(alpha: float, beta: float, z: float, kmax: int | None = None) -> MLValue:
    """Power-series evaluation with exactly rounded summation.

    Accurate whenever the largest term is not much bigger than the result,
    i.e. for positive ``z`` and for moderate negative ``z``.
    """
    _check_params(alpha, beta)
    if kmax is None:
        kmax = int(2.0 * max(abs(z), 1.0) ** (1.0 / alpha) / alpha + 60)
    k, arg, terms = _series_terms(alpha, beta, float(z), kmax)
    psi = special.psi(arg)
    value = math.fsum(terms)
    d_beta = -math.fsum(psi * terms)
    d_alpha = -math.fsum(k * psi * terms)
    if z != 0.0:
        d_z = math.fsum((k * terms)[1:] / z)
    else:
        d_z = float(special.rgamma(alpha + beta))
    return MLValue(value, d_alpha, d_beta, d_z)


def ml_asymptotic(alpha: float, beta: float, z: float, terms: int = 10) -> float:
    """Leading terms of the large negative ``z`` expansion (0 < alpha < 1)."""
    if not (z < 0 and 0 < alpha < 1):
        raise MLDomainError("asymptotic expansion needs z < 0 and 0 < alpha < 1")
    k = np.arange(1, terms + 1, dtype=float)
    return float(-np.sum(z ** (-k) * special.rgamma(beta - alpha * k)))


def mittag_leffler(alpha, beta, z, derivatives: bool = False):
    """Vectorised :math:`E_{\\alpha,\\beta}(z)` for real ``z``.

    ``alpha``, ``beta`` and ``z`` broadcast against each other. Returns the
    value array, or ``(value, d_alpha, d_beta, d_z)`` when ``derivatives`` is
    set. Passing the same object for ``alpha`` and ``beta`` selects the
    :math:`E_{\\alpha,\\alpha}` fast path.
    """
    same = beta is alpha
    alpha_a, z_a = np.broadcast_arrays(np.asarray(alpha, dtype=float), np.asarray(z, dtype=float))
    beta_a = alpha_a if same else np.broadcast_to(np.asarray(beta, dtype=float), z_a.shape)
    _check_params(alpha_a, beta_a)

    out = [np.empty(z_a.shape) for _ in range(4 if derivatives else 1)]

    neg = z_a < 0.0
    unit = (alpha_a == 1.0) & (beta_a == 1.0)
    zero = z_a == 0.0
    pos = z_a > 0.0

    near = (
        neg & ~unit & (z_a < -SMALL_Z)
        & (np.abs(alpha_a - 1.0) <= NEAR_UNIT) & (np.abs(beta_a - 1.0) <= NEAR_UNIT)
    )
    if near.any():
        a = alpha_a[near]
        res = _near_unit_eval(a, a if same else beta_a[near], z_a[near], derivatives)
        _scatter(out, near, res, derivatives)
    small = neg & ~unit & (z_a >= -SMALL_Z)
    if small.any():
        a = alpha_a[small]
        res = _small_series(a, a if same else beta_a[small], z_a[small], derivatives)
        _scatter(out, small, res, derivatives)
    m = neg & ~unit & ~small & ~near
    if m.any():
        a = alpha_a[m]
        res = _contour_eval(a, a if same else beta_a[m], z_a[m], derivatives)
        _scatter(out, m, res, derivatives)
    m = unit & ~zero
    if m.any():
        _scatter(out, m, _exp_eval(z_a[m], derivatives), derivatives)
    if zero.any():
        b = beta_a[zero]
        r = special.rgamma(b)
        res = (r, np.zeros_like(r), -special.psi(b) * r, special.rgamma(alpha_a[zero] + b))
        _scatter(out, zero, res, derivatives)
    m = pos & ~unit
    if m.any():
        vals = [ml_series(float(a), float(b), float(x)) for a, b, x in zip(alpha_a[m], beta_a[m], z_a[m])]
        res = tuple(np.array([getattr(v, f) for v in vals]) for f in ("value", "d_alpha", "d_beta", "d_z"))
        _scatter(out, m, res, derivatives)

    for arr in out:
        if not np.all(np.isfinite(arr)):
            raise MLEvaluationError("Mittag-Leffler evaluation produced a non-finite result")
    if derivatives:
        return tuple(arr if arr.ndim else float(arr) for arr in out)
    return out[0] if out[0].ndim else float(out[0])


def _scatter(out, mask, res, derivatives: bool) -> None:
    if not derivatives:
        res = (res[0],) if isinstance(res, tuple) else (res,)
    for dst, src in zip(out, res):
        dst[mask] = src


def ml_eval(alpha: float, beta: float, z: float, want_derivs: bool = False) -> MLValue:
    """Scalar evaluation with a convergence check.

    Negative arguments are evaluated at two contour resolutions; if they
    disagree by more than :data:`CHECK_RTOL` an :class:`MLEvaluationError`
    is raised instead of returning an unreliable number.
    """
    _check_params(alpha, beta)
    if not math.isfinite(z):
        raise MLDomainError(f"z must be finite, got {z!r}")
    res = mittag_leffler(alpha, beta, z, derivatives=True)
    near = abs(alpha - 1.0) <= NEAR_UNIT and abs(beta - 1.0) <= NEAR_UNIT
    if z < -SMALL_Z and not near:
        fine = _contour_eval(np.float64(alpha), np.float64(beta), np.float64(z), True, CHECK_NODES)
        for coarse_v, fine_v in zip(res, fine):
            scale = max(abs(coarse_v), abs(fine_v), 1e-300)
            if abs(coarse_v - fine_v) > CHECK_RTOL * scale and abs(coarse_v - fine_v) > 1e-15:
                raise MLEvaluationError(
                    f"contour quadrature did not converge for alpha={alpha}, beta={beta}, z={z}"
                )
    if not want_derivs:
        return MLValue(float(res[0]))
    return MLValue(*(float(r) for r in res))


def log_derivatives(alpha, a, tau, kind: Kind):
    """Log-derivatives of the sojourn density or survival at elapsed time ``tau``.

    For ``kind="density"`` the function differentiated is
    :math:`\\log E_{\\alpha,\\alpha}(a\\tau^\\alpha)`, for ``"survival"`` it is
    :math:`\\log E_{\\alpha}(a\\tau^\\alpha)`. Returns ``(d_rate, d_alpha, value)``
    where ``d_rate`` is the derivative in ``a``, ``d_alpha`` is the total
    derivative in ``alpha`` (exponent parameters and argument both move) and
    ``value`` is the Mittag-Leffler value itself.
    """
    alpha = np.asarray(alpha, dtype=float)
    a = np.asarray(a, dtype=float)
    tau = np.asarray(tau, dtype=float)
    log_tau = np.log(tau)
    tpow = np.exp(alpha * log_tau)
    z = a * tpow
    if kind == "density":
        value, d_alpha, d_beta, d_z = mittag_leffler(alpha, alpha, z, derivatives=True)
        d_exponent = d_alpha + d_beta
    elif kind == "survival":
        value, d_exponent, _, d_z = mittag_leffler(alpha, 1.0, z, derivatives=True)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    dlog_z = d_z / value
    return tpow * dlog_z, d_exponent / value + z * log_tau * dlog_z, value


def _check_rate_args(a: float, tau: float) -> None:
    if not a < 0:
        raise MLDomainError(f"rate argument a must be negative, got {a!r}")
    if not tau > 0:
        raise MLDomainError(f"tau must be positive, got {tau!r}")


def ml_log_deriv_rate(alpha: float, a: float, tau: float, kind: Kind) -> float:
    """:math:`\\partial_a \\log E(a\\tau^\\alpha)` for the density or survival kernel."""
    _check_params(alpha, 1.0)
    _check_rate_args(a, tau)
    return float(log_derivatives(alpha, a, tau, kind)[0])


def ml_log_deriv_alpha(alpha: float, a: float, tau: float, kind: Kind) -> float:
    """Total :math:`\\mathrm{d}/\\mathrm{d}\\alpha \\log E(a\\tau^\\alpha)`, chain term included."""
    _check_params(alpha, 1.0)
    _check_rate_args(a, tau)
    return float(log_derivatives(alpha, a, tau, kind)[1])
