"""Independent reference values for the test suite.

These re-derive results from first principles (power series in extended
precision, exact rational arithmetic) and share no code with the package.
"""

from __future__ import annotations

from fractions import Fraction

import mpmath


def ml_mp(alpha: float, beta: float, z: float, dps: int = 60) -> float:
    """Mittag-Leffler by its power series in extended precision."""
    with mpmath.workdps(dps):
        a, b, z = mpmath.mpf(alpha), mpmath.mpf(beta), mpmath.mpf(z)
        s, n = mpmath.mpf(0), 0
        while True:
            term = z ** n * mpmath.rgamma(a * n + b)
            s += term
            if n > 10 and abs(term) < mpmath.mpf(10) ** (-dps + 5) * max(1, abs(s)):
                return float(s)
            n += 1


def ml_laplace(alpha: float, beta: float, z: float, dps: int = 30) -> float:
    """Mittag-Leffler at ``z < 0`` by numerical Laplace inversion.

    ``t^(beta-1) E_{alpha,beta}(-x t^alpha)`` has transform
    ``s^(alpha-beta) / (s^alpha + x)``; inverting at ``t = 1`` (Talbot
    contour) gives ``E_{alpha,beta}(-x)`` without the cancellation that
    makes the power series impractical for large ``|z|``.
    """
    if z >= 0:
        raise ValueError("ml_laplace needs z < 0")
    with mpmath.workdps(dps):
        a, b, x = mpmath.mpf(alpha), mpmath.mpf(beta), -mpmath.mpf(z)
        return float(mpmath.invertlaplace(lambda s: s ** (a - b) / (s ** a + x), 1, method="talbot"))


def ml_reference(alpha: float, beta: float, z: float) -> float:
    """Series in extended precision where it is cheap, Laplace inversion otherwise."""
    if z >= 0 or abs(z) ** (1.0 / alpha) < 200:
        peak_digits = abs(z) ** (1.0 / alpha) / 2.3
        return ml_mp(alpha, beta, z, dps=int(40 + peak_digits))
    return ml_laplace(alpha, beta, z)


def eps_family_solution(lam: float, eps: float, alpha: float, t: float, n_max: int = 800,
                        m_max: int = 60, dps: int = 50) -> float:
    """Solution at ``t`` of ``d^alpha u = -lam (1 + eps t) u``, ``u(0) = 1``.

    Ansatz ``u = sum c[n, m] t^(n alpha + m)`` with ``c[0, 0] = 1``; matching
    powers gives ``c[n+1, m] Gamma((n+1) alpha + m + 1) / Gamma(n alpha + m + 1)
    = -lam (c[n, m] + eps c[n, m-1])`` and ``c[0, m] = 0`` for ``m > 0``.
    """
    with mpmath.workdps(dps):
        a, L, E, T = mpmath.mpf(alpha), mpmath.mpf(lam), mpmath.mpf(eps), mpmath.mpf(t)
        c = {(0, 0): mpmath.mpf(1)}
        total = mpmath.mpf(1)
        for n in range(n_max):
            row_max = mpmath.mpf(0)
            for m in range(0, min(n + 1, m_max) + 1):
                prev = c.get((n, m), 0) + E * c.get((n, m - 1), 0)
                if prev == 0:
                    continue
                val = -L * prev * mpmath.gamma(n * a + m + 1) / mpmath.gamma((n + 1) * a + m + 1)
                c[(n + 1, m)] = val
                term = val * T ** ((n + 1) * a + m)
                total += term
                row_max = max(row_max, abs(term))
            if n > 5 and row_max < mpmath.mpf(10) ** (-30):
                return float(total)
        raise RuntimeError("eps-family series did not converge")


def local_params_exact(alpha, lambda_A, p):
    """Exact rational evaluation of the growth exponents (inputs as strings or Fractions)."""
    al, la, p = Fraction(alpha), Fraction(lambda_A), Fraction(p)
    a = 1 - al + al * la / 2 * (1 - 1 / p)
    b = al / (p - 1) - al * la / (2 * p)
    thr = 1 + 2 * al / (2 * (1 - al) + al * la)
    return a, b, thr


def q_exact(alpha, lambda_A, p, b):
    al, la, p, b = Fraction(alpha), Fraction(lambda_A), Fraction(p), Fraction(b)
    return 2 * al * la * p / (al * la + 2 * p * b)
