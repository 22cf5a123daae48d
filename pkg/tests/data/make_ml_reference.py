"""Regenerate ``ml_reference.json``: high-precision Mittag-Leffler values.

Independent of the package. Values on the negative axis come from

* closed forms: ``E_1(z) = e^z``, ``E_1/2(-x) = erfcx(x)``,
  ``E_1/2,1/2(-x) = 1/sqrt(pi) - x erfcx(x)``;
* otherwise the real-axis (Laplace) representation for ``0 < alpha < 1``::

      E_a(-t^a)     = int_0^inf exp(-r t) K_a(r) dr
      E_a,a(-t^a)   = t^(1-a) int_0^inf r exp(-r t) K_a(r) dr
      K_a(r)        = r^(a-1) sin(a pi) / (pi (r^(2a) + 2 r^a cos(a pi) + 1))

  evaluated with mpmath quadrature at 30 digits.

Derivatives on a coarser subset are central differences (step 1e-8) of
the same high-precision oracle; near ``alpha = 1`` the power series at
150 digits is used instead because the integral needs ``alpha < 1``.

Run: ``python3 tests/data/make_ml_reference.py`` (a few minutes).
"""

from __future__ import annotations

import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 30

GRID = 1000
DERIV_STRIDE = 40
COMBOS = [(0.5, 1.0), (0.5, 0.5), (0.7, 1.0), (0.7, 0.7), (0.9, 1.0), (0.9, 0.9), (1.0, 1.0)]


def series(alpha, beta, z, dps=150):
    with mp.workdps(dps):
        alpha, beta, z = mp.mpf(alpha), mp.mpf(beta), mp.mpf(z)
        total, k = mp.mpf(0), 0
        while True:
            term = z**k / mp.gamma(alpha * k + beta)
            total += term
            if k > 20 and abs(term) < mp.mpf(10) ** (-dps + 10) * max(abs(total), mp.mpf(10) ** -60):
                return +total
            k += 1


def kernel(alpha, r):
    return r ** (alpha - 1) * mp.sin(alpha * mp.pi) / (mp.pi * (r ** (2 * alpha) + 2 * r**alpha * mp.cos(alpha * mp.pi) + 1))


def integral(alpha, beta, z):
    """E_{alpha,beta}(z) for z < 0, beta in {1, alpha}, 0 < alpha < 1."""
    alpha, z = mp.mpf(alpha), mp.mpf(z)
    t = (-z) ** (1 / alpha)
    cuts = sorted({mp.mpf(0), 1 / t, mp.mpf(1), 10 / t, mp.inf})
    if beta == 1.0:
        return mp.quad(lambda r: mp.exp(-r * t) * kernel(alpha, r), cuts)
    return t ** (1 - alpha) * mp.quad(lambda r: r * mp.exp(-r * t) * kernel(alpha, r), cuts)


def oracle(alpha, beta, z, same):
    """Value at (alpha, beta, z); ``same`` means beta tracks alpha (only used for closed-form dispatch)."""
    alpha, beta, z = mp.mpf(alpha), mp.mpf(beta), mp.mpf(z)
    if z == 0:
        return 1 / mp.gamma(beta)
    if alpha == 1 and beta == 1:
        return mp.exp(z)
    if alpha == 0.5 and beta == 1:
        x = -z
        return mp.exp(x * x) * mp.erfc(x)
    if alpha == 0.5 and beta == 0.5:
        x = -z
        return 1 / mp.sqrt(mp.pi) - x * mp.exp(x * x) * mp.erfc(x)
    if abs(alpha - 1) < 1e-6 or abs(beta - 1) > 1e-12 and abs(beta - alpha) > 1e-12:
        return series(alpha, beta, z)
    return integral(alpha, beta, z)


def general(alpha, beta, z):
    """Oracle for perturbed parameters (no closed-form shortcuts)."""
    if z == 0:
        return 1 / mp.gamma(beta)
    if alpha >= 1 - 1e-6 or -z < 2:
        return series(alpha, beta, z)
    if abs(beta - 1) < 1e-15 or abs(beta - alpha) < 1e-15:
        return integral(alpha, 1.0 if abs(beta - 1) < 1e-15 else alpha, z)
    raise ValueError("no oracle for these parameters")


def check_integral() -> None:
    for alpha in (0.5, 0.7, 0.9):
        for beta in (1.0, alpha):
            for z in (-0.3, -1.0, -4.0):
                a, b = integral(alpha, beta, z), series(alpha, beta, z)
                assert abs(a - b) < mp.mpf(10) ** -15 * abs(b), (alpha, beta, z, a, b)


def main() -> None:
    check_integral()
    h = mp.mpf("1e-8")
    out = []
    for alpha, beta in COMBOS:
        zs = [-100.0 * j / (GRID - 1) for j in range(GRID)]
        values = [float(oracle(alpha, beta, z, beta == alpha)) for z in zs]
        derivs = []
        for j in range(0, GRID, DERIV_STRIDE):
            z = mp.mpf(zs[j])
            if z == 0:
                continue
            d_z = (general(alpha, beta, z + h) - general(alpha, beta, z - h)) / (2 * h)
            # The integral oracle exists only for beta = 1 or beta = alpha, so
            # beta = 1 rows check d_alpha (beta fixed) and beta = alpha rows
            # check the total derivative d_alpha + d_beta along beta = alpha.
            if beta == 1.0:
                d_a = (general(alpha + h, 1.0, z) - general(alpha - h, 1.0, z)) / (2 * h)
                derivs.append(dict(z=float(z), d_z=float(d_z), d_alpha=float(d_a)))
            else:
                d_tot = (general(alpha + h, beta + h, z) - general(alpha - h, beta - h, z)) / (2 * h)
                derivs.append(dict(z=float(z), d_z=float(d_z), d_total=float(d_tot)))
        out.append(dict(alpha=alpha, beta=beta, z=zs, value=values, derivatives=derivs))
        print(f"alpha={alpha} beta={beta} done", flush=True)
    Path(__file__).with_name("ml_reference.json").write_text(json.dumps(out))


if __name__ == "__main__":
    main()
