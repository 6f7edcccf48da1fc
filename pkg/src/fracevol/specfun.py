"""Scalar special functions: Abel kernel, Gamma/Beta identities, Wright and
Mittag-Leffler functions.

All functions are pure.  Accuracy targets:

* ``gamma_fn``: relative 1e-13 (stdlib ``math.gamma``).
* ``wright_phi``: absolute ``SeriesAccuracy.abs_tol``.  The alternating series
  is summed in floating point while the cancellation loss is below the
  tolerance and with extended precision (``mpmath``) otherwise.  Once the
  precision needed to absorb the cancellation exceeds ``MAX_WRIGHT_DPS`` the
  evaluation fails with :class:`SeriesConvergenceError`, except in the far
  tail: the density is unimodal, so beyond a point past the mode where the
  series itself gives a value below ``abs_tol / 100`` the exact value lies
  in ``[0, abs_tol)`` and ``0.0`` is returned.  Callers integrating against
  the density truncate at ``WrightDensity.z_max`` long before that.
* ``mittag_leffler``: relative 1e-10 for real ``|z| <= ML_CEILING``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from numpy.polynomial import chebyshev as C
from scipy import integrate, special

from .errors import AccuracyCeilingError, DomainError, SeriesConvergenceError

MAX_WRIGHT_DPS = 400
ML_CEILING = 50.0
_EPS = np.finfo(float).eps


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"fractional order must lie in (0, 1), got {alpha}")
    return alpha


@dataclass(frozen=True)
class SeriesAccuracy:
    abs_tol: float = 1e-14
    max_terms: int = 2000

    def __post_init__(self):
        if not self.abs_tol >= 10 * _EPS:
            raise DomainError(f"abs_tol must be >= 10*eps, got {self.abs_tol}")
        if self.max_terms < 16:
            raise DomainError(f"max_terms must be >= 16, got {self.max_terms}")


DEFAULT_ACCURACY = SeriesAccuracy()


def gamma_fn(x: float) -> float:
    if x <= 0:
        raise DomainError(f"gamma_fn requires x > 0, got {x}")
    return math.gamma(x)


def g_alpha(alpha: float, t):
    """Abel kernel ``t**(alpha-1)/Gamma(alpha)`` for t > 0, zero otherwise.

    Accepts scalars or arrays; any ``alpha > 0`` is allowed so the same helper
    serves the complementary kernel ``g_{1-alpha}``.
    """
    if alpha <= 0:
        raise DomainError(f"g_alpha requires alpha > 0, got {alpha}")
    t_arr = np.asarray(t, dtype=float)
    out = np.zeros_like(t_arr)
    pos = t_arr > 0
    out[pos] = t_arr[pos] ** (alpha - 1.0) / math.gamma(alpha)
    return float(out) if out.ndim == 0 else out


def beta_convolution(alpha: float, beta: float, tau: float, t: float,
                     debug: bool = False) -> float:
    """``int_tau^t (t-s)^(alpha-1) (s-tau)^(beta-1) ds`` in closed form.

    With ``debug=True`` the closed form is compared against adaptive
    quadrature with Jacobi weights and an ``AssertionError`` is raised on a
    relative mismatch above 1e-8.
    """
    if not (alpha > 0 and beta > 0):
        raise DomainError("beta_convolution requires alpha, beta > 0")
    if not (t > tau >= 0):
        raise DomainError(f"beta_convolution requires t > tau >= 0, got t={t}, tau={tau}")
    lg = math.lgamma(alpha) + math.lgamma(beta) - math.lgamma(alpha + beta)
    value = math.exp(lg) * (t - tau) ** (alpha + beta - 1.0)
    if debug:
        check = beta_convolution_quad(alpha, beta, tau, t)
        if abs(check - value) > 1e-8 * abs(value):
            raise AssertionError(f"beta identity mismatch: {value} vs {check}")
    return value


def beta_convolution_quad(alpha: float, beta: float, tau: float, t: float) -> float:
    val, _ = integrate.quad(lambda s: 1.0, tau, t, weight="alg",
                            wvar=(beta - 1.0, alpha - 1.0),
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return val


# ---------------------------------------------------------------- Wright

def _wright_log_terms(alpha: float, z: float, n: np.ndarray) -> np.ndarray:
    # |1/Gamma(1 - x)| <= Gamma(x)/pi with x = alpha*(n+1)
    x = alpha * (n + 1.0)
    return n * math.log(z) - special.gammaln(n + 1.0) + special.gammaln(x) - math.log(math.pi)


def wright_phi(alpha: float, z: float, acc: SeriesAccuracy = DEFAULT_ACCURACY) -> float:
    """Wright-type density ``sum (-z)^n / (n! Gamma(1 - alpha - alpha n))``.

    Returns a value clipped at zero (the function is a probability density
    on ``[0, inf)``).
    """
    alpha = check_alpha(alpha)
    z = float(z)
    if z < 0:
        raise DomainError(f"wright_phi requires z >= 0, got {z}")
    if z == 0.0:
        return 1.0 / math.gamma(1.0 - alpha)
    try:
        return _wright_series(alpha, z, acc)
    except SeriesConvergenceError:
        cut = _wright_tail_start(alpha, acc.abs_tol, acc.max_terms)
        if cut is not None and z >= cut:
            return 0.0
        raise


def _wright_series(alpha: float, z: float, acc: SeriesAccuracy) -> float:
    logs = _wright_log_terms(alpha, z, np.arange(acc.max_terms, dtype=float))
    n_peak = int(np.argmax(logs))
    log_peak = float(logs[n_peak])
    log_tol = math.log(acc.abs_tol)
    if n_peak >= acc.max_terms - 2 or logs[-1] > log_tol:
        raise SeriesConvergenceError(
            f"Wright series for alpha={alpha}, z={z} needs more than {acc.max_terms} terms")
    if log_peak + math.log(64 * _EPS) < log_tol - math.log(10.0):
        value = _wright_series_float(alpha, z, acc)
    else:
        dps = int(math.ceil((log_peak - log_tol) / math.log(10.0))) + 12
        if dps > MAX_WRIGHT_DPS:
            raise SeriesConvergenceError(
                f"Wright series cancellation at alpha={alpha}, z={z} needs {dps} digits")
        value = _wright_series_mp(alpha, z, acc, dps)
    return max(value, 0.0)


@lru_cache(maxsize=64)
def _wright_tail_start(alpha: float, abs_tol: float, max_terms: int) -> float | None:
    """Smallest grid point past the mode where the series value is below ``abs_tol / 100``.

    Scans ``z = 0.25, 0.5, ...`` with the series; ``None`` when the series
    fails before such a point is found.
    """
    acc = SeriesAccuracy(abs_tol, max_terms)
    prev = 1.0 / math.gamma(1.0 - alpha)
    z = 0.0
    while True:
        z += 0.25
        try:
            val = _wright_series(alpha, z, acc)
        except SeriesConvergenceError:
            return None
        if val <= prev and val < 1e-2 * abs_tol:
            return z
        prev = val


def _wright_series_float(alpha: float, z: float, acc: SeriesAccuracy) -> float:
    terms = []
    term_mag = 1.0
    small = 0
    for n in range(acc.max_terms):
        if n > 0:
            term_mag *= z / n
        terms.append((-1) ** n * term_mag * special.rgamma(1.0 - alpha - alpha * n))
        bound = term_mag * math.exp(special.gammaln(alpha * (n + 1.0))) / math.pi
        small = small + 1 if bound < acc.abs_tol * 1e-2 else 0
        if small >= 2:
            return math.fsum(terms)
    raise SeriesConvergenceError(f"Wright series did not converge in {acc.max_terms} terms")


def _wright_series_mp(alpha: float, z: float, acc: SeriesAccuracy, dps: int) -> float:
    with mpmath.workdps(dps):
        a = mpmath.mpf(alpha)
        mz = -mpmath.mpf(z)
        total = mpmath.mpf(0)
        power = mpmath.mpf(1)
        log_tol = math.log(acc.abs_tol * 1e-2)
        log_z = math.log(z)
        small = 0
        for n in range(acc.max_terms):
            if n > 0:
                power = power * mz / n
            total += power * mpmath.rgamma(1 - a - a * n)
            log_bound = (n * log_z - math.lgamma(n + 1.0) + math.lgamma(alpha * (n + 1.0))
                         - math.log(math.pi))
            small = small + 1 if log_bound < log_tol else 0
            if small >= 2:
                return float(total)
    raise SeriesConvergenceError(f"Wright series did not converge in {acc.max_terms} terms")


class WrightDensity:
    """Chebyshev interpolant of the Wright density on ``[0, z_max]``.

    ``z_max`` is the point beyond the mode where the density falls below
    ``1e-16`` times its maximum; the super-exponential decay makes the
    neglected mass far smaller than 1e-10.
    """

    def __init__(self, alpha: float, rel_cut: float = 1e-16):
        self.alpha = check_alpha(alpha)
        self.z_max = _find_zmax(self.alpha, rel_cut)
        self.coef = _fit_chebyshev(self.alpha, self.z_max)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        x = 2.0 * z / self.z_max - 1.0
        out = C.chebval(x, self.coef)
        out = np.where((z < 0) | (z > self.z_max), 0.0, out)
        return np.maximum(out, 0.0)

    def moment(self, delta: float) -> float:
        """Moment by adaptive quadrature of the interpolant (cross-check path)."""
        if delta <= -1:
            raise DomainError(f"moment requires delta > -1, got {delta}")
        f = lambda s: float(self(s))  # noqa: E731
        if delta < 0:
            val, _ = integrate.quad(f, 0.0, self.z_max, weight="alg", wvar=(delta, 0.0),
                                    epsabs=1e-15, epsrel=1e-12, limit=400)
        else:
            val, _ = integrate.quad(lambda s: s ** delta * f(s), 0.0, self.z_max,
                                    epsabs=1e-15, epsrel=1e-12, limit=400)
        return val


def _find_zmax(alpha: float, rel_cut: float) -> float:
    peak = max(wright_phi(alpha, z) for z in np.linspace(0.0, 3.0, 31))
    thresh = rel_cut * peak
    lo, hi = 1.0, 2.0
    while wright_phi(alpha, hi) >= thresh:
        lo, hi = hi, 2.0 * hi
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if wright_phi(alpha, mid) >= thresh:
            lo = mid
        else:
            hi = mid
    return hi


def _fit_chebyshev(alpha: float, z_max: float) -> np.ndarray:
    f = np.vectorize(lambda z: wright_phi(alpha, z))
    # the evaluation noise floor is ~1e-15, so the tail test is against 1e-13
    for deg in (96, 192):
        coef = C.chebinterpolate(lambda x: f(0.5 * z_max * (x + 1.0)), deg)
        if np.max(np.abs(coef[-8:])) < 1e-13 * np.max(np.abs(coef)):
            break
    return coef


@lru_cache(maxsize=32)
def wright_density(alpha: float) -> WrightDensity:
    return WrightDensity(alpha)


def wright_moment(alpha: float, delta: float, debug: bool = False) -> float:
    """``int_0^inf t^delta Phi_alpha(t) dt = Gamma(1+delta)/Gamma(1+alpha*delta)``."""
    alpha = check_alpha(alpha)
    if delta <= -1:
        raise DomainError(f"wright_moment requires delta > -1, got {delta}")
    value = math.exp(math.lgamma(1.0 + delta) - math.lgamma(1.0 + alpha * delta))
    if debug:
        check = wright_density(alpha).moment(delta)
        if abs(check - value) > 1e-7 * value:
            raise AssertionError(f"moment mismatch: {value} vs {check}")
    return value


# -------------------------------------------------------- Mittag-Leffler

def mittag_leffler(gamma: float, beta: float, z: float) -> float:
    """Two-parameter Mittag-Leffler function ``sum z^n / Gamma(gamma n + beta)``.

    Real arguments only.  Positive ``z`` uses the positive-term series;
    negative ``z`` uses the Hankel-contour integral collapsed onto the
    negative axis when ``gamma < 1`` (no cancellation; larger ``beta`` is
    first lowered by the recursion in ``beta``), otherwise the series in
    extended precision.  Arguments
    with ``|z| > ML_CEILING`` raise :class:`AccuracyCeilingError`.
    """
    if gamma <= 0 or beta <= 0:
        raise DomainError("mittag_leffler requires gamma > 0 and beta > 0")
    z = float(z)
    if abs(z) > ML_CEILING:
        raise AccuracyCeilingError(f"|z| = {abs(z)} exceeds the Mittag-Leffler ceiling {ML_CEILING}")
    if z == 0.0:
        return float(special.rgamma(beta))
    if z > 0:
        return _ml_positive(gamma, beta, z)
    if gamma < 1.0 and z < -1.0:
        if beta < 1.0 + gamma:
            return _ml_negative_integral(gamma, beta, -z)
        # E_{g,b}(z) = (E_{g,b-g}(z) - 1/Gamma(b-g)) / z
        return (mittag_leffler(gamma, beta - gamma, z) - float(special.rgamma(beta - gamma))) / z
    return _ml_series_mp(gamma, beta, z)


def _ml_positive(gamma: float, beta: float, z: float) -> float:
    logz = math.log(z)
    terms = []
    n = 0
    while True:
        lt = n * logz - math.lgamma(gamma * n + beta)
        if lt > 709.0:
            raise AccuracyCeilingError(f"E_{gamma},{beta}({z}) overflows double precision")
        terms.append(math.exp(lt))
        if n > 2 and terms[-1] < 1e-18 * math.fsum(terms) and terms[-1] <= terms[-2]:
            return math.fsum(terms)
        n += 1


def _ml_negative_integral(gamma: float, beta: float, x: float) -> float:
    a, b = gamma, beta
    sa = math.sin(math.pi * (b - a))
    sb = math.sin(math.pi * b)
    c = math.cos(math.pi * a)

    def core(r):
        ra = r ** a
        return (x * sa + ra * sb) / (ra * ra + 2.0 * x * ra * c + x * x) * math.exp(-r)

    i1, _ = integrate.quad(core, 0.0, 1.0, weight="alg", wvar=(a - b, 0.0),
                           epsabs=0.0, epsrel=1e-13, limit=200)
    i2, _ = integrate.quad(lambda r: core(r) * r ** (a - b), 1.0, math.inf,
                           epsabs=0.0, epsrel=1e-13, limit=200)
    return (i1 + i2) / math.pi


def _ml_series_mp(gamma: float, beta: float, z: float) -> float:
    n = np.arange(4000.0)
    logs = n * math.log(abs(z)) - special.gammaln(gamma * n + beta)
    k_peak = int(np.argmax(logs))
    lost = max(0.0, float(logs[k_peak])) / math.log(10.0)
    extra = 0.0
    while True:
        dps = int(math.ceil(lost + extra)) + 20
        if dps > MAX_WRIGHT_DPS:
            raise AccuracyCeilingError(f"E_{gamma},{beta}({z}) needs {dps} digits")
        value = _ml_series_at(gamma, beta, z, dps, k_peak, logs[k_peak])
        # absolute error ~ 10**(lost - dps + 2); demand 1e-13 relative
        deficit = (lost - dps + 2) - (math.log10(abs(value)) - 13.0) if value else 0.0
        if deficit <= 0 or extra > 0:
            return value
        extra = deficit + 5.0


def _ml_series_at(gamma, beta, z, dps, k_peak, log_peak):
    with mpmath.workdps(dps):
        zz = mpmath.mpf(z)
        g = mpmath.mpf(gamma)
        b = mpmath.mpf(beta)
        total = mpmath.mpf(0)
        power = mpmath.mpf(1)
        stop = mpmath.exp(mpmath.mpf(float(log_peak))) * mpmath.mpf(10) ** (-dps + 2)
        for k in range(100000):
            term = power * mpmath.rgamma(g * k + b)
            total += term
            if k > k_peak and abs(term) < stop:
                break
            power *= zz
        return float(total)
