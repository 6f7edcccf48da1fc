"""Subordinated operator families built from the Wright density.

For a generator ``L`` (spectrum in the left half-plane)

    phi(tau) = int_0^inf Phi_alpha(z) exp(tau^alpha z L) dz,
    psi(tau) = alpha tau^(alpha-1) int_0^inf z Phi_alpha(z) exp(tau^alpha z L) dz.

``psi`` is handled through its regularized form ``psi_hat(tau) =
tau^(1-alpha) psi(tau)``, finite at ``tau = 0`` where it equals ``I/Gamma(alpha)``.
On an eigenvalue ``mu`` the two maps reduce to ``E_alpha(mu tau^alpha)`` and
``E_{alpha,alpha}(mu tau^alpha)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import special

from .errors import DomainError, QuadratureError
from .generator import GeneratorFamily
from .specfun import check_alpha, wright_density

# e^{-DECAY_CUT} ~ 4e-18: the integrand beyond z = DECAY_CUT / s is negligible
DECAY_CUT = 40.0


@dataclass
class SubordinationQuadrature:
    """Gauss-Legendre rule against the Wright density.

    The base rule lives on ``[0, z_max]``.  For an eigenvalue with decay rate
    ``s = -mu tau^alpha`` the same nodes are rescaled onto
    ``[0, min(z_max, DECAY_CUT / s)]`` so that fast modes stay resolved.
    """

    alpha: float
    n_nodes: int = 64
    z_max: float = field(init=False)
    rule: str = field(init=False)

    def __post_init__(self):
        self.alpha = check_alpha(self.alpha)
        if self.n_nodes < 8:
            raise DomainError("quad_nodes must be at least 8")
        self.density = wright_density(self.alpha)
        self.z_max = self.density.z_max
        x, w = np.polynomial.legendre.leggauss(self.n_nodes)
        self._x = 0.5 * (x + 1.0)
        self._w = 0.5 * w
        self.rule = f"gauss-legendre-{self.n_nodes} on [0, {self.z_max:.4g}] rescaled per mode"
        mass = float(np.dot(self.weights, self.density(self.nodes)))
        if abs(mass - 1.0) > 1e-6:
            raise QuadratureError(f"quadrature does not resolve the density: mass {mass!r}")

    @property
    def nodes(self) -> np.ndarray:
        return self.z_max * self._x

    @property
    def weights(self) -> np.ndarray:
        return self.z_max * self._w

    def _panel(self, s: np.ndarray):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            b = np.where(s > DECAY_CUT / self.z_max, DECAY_CUT / np.where(s > 0, s, 1.0), self.z_max)
        z = b[..., None] * self._x
        return z, b[..., None] * self._w

    def _integrate(self, mu, tau, moment: int) -> np.ndarray:
        mu, tau = np.broadcast_arrays(np.asarray(mu, dtype=float), np.asarray(tau, dtype=float))
        if np.any(tau < 0):
            raise DomainError("subordination requires tau >= 0")
        ta = tau ** self.alpha
        z, w = self._panel(-mu * ta)
        f = w * self.density(z) * np.exp((mu * ta)[..., None] * z)
        if moment:
            f = f * z
        return np.sum(f, axis=-1)

    def phi_values(self, mu, tau) -> np.ndarray:
        """``int Phi(z) exp(mu tau^alpha z) dz``; ``mu`` and ``tau`` broadcast."""
        val = self._integrate(mu, tau, 0)
        return np.where(np.asarray(tau) == 0, 1.0, val)

    def psi_hat_values(self, mu, tau) -> np.ndarray:
        """``alpha int z Phi(z) exp(mu tau^alpha z) dz``; equals ``1/Gamma(alpha)`` at ``tau=0``."""
        val = self.alpha * self._integrate(mu, tau, 1)
        return np.where(np.asarray(tau) == 0, 1.0 / math.gamma(self.alpha), val)


def _dense_integral(quad: SubordinationQuadrature, L: np.ndarray, tau: float, moment: int) -> np.ndarray:
    # eigen-free path: geometric panels resolve every decay scale of exp(tau^a z L)
    ta = tau ** quad.alpha
    rate = max(float(np.max(np.abs(L))) * L.shape[0] * ta, 1e-300)
    lo = min(DECAY_CUT / rate, quad.z_max) / 64.0
    edges = np.concatenate([[0.0], np.geomspace(lo, quad.z_max, 24)])
    x, w = np.polynomial.legendre.leggauss(16)
    out = np.zeros_like(L)
    for a, b in zip(edges[:-1], edges[1:]):
        for xi, wi in zip(0.5 * (b - a) * (x + 1) + a, 0.5 * (b - a) * w):
            out += wi * xi ** moment * float(quad.density(xi)) * sla.expm(ta * xi * L)
    return out if moment == 0 else quad.alpha * out


def phi_matrix(family: GeneratorFamily, t: float, tau: float, quad: SubordinationQuadrature) -> np.ndarray:
    if tau < 0:
        raise DomainError(f"phi requires tau >= 0, got {tau}")
    if tau == 0:
        return np.eye(family.size)
    sp = family.spectral(t)
    if sp is not None:
        return sp.apply_fn(quad.phi_values(sp.mu, tau))
    return _dense_integral(quad, family.matrix(t), tau, 0)


def psi_hat_matrix(family: GeneratorFamily, t: float, tau: float, quad: SubordinationQuadrature) -> np.ndarray:
    """Regularized ``tau^(1-alpha) psi_t(tau)``, finite for ``tau >= 0``."""
    if tau < 0:
        raise DomainError(f"psi requires tau >= 0, got {tau}")
    if tau == 0:
        return np.eye(family.size) / math.gamma(quad.alpha)
    sp = family.spectral(t)
    if sp is not None:
        return sp.apply_fn(quad.psi_hat_values(sp.mu, tau))
    return _dense_integral(quad, family.matrix(t), tau, 1)


def phi_apply(family: GeneratorFamily, t: float, tau: float, v, quad: SubordinationQuadrature) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if tau < 0:
        raise DomainError(f"phi requires tau >= 0, got {tau}")
    if tau == 0:
        return v.copy()
    sp = family.spectral(t)
    if sp is not None:
        return sp.V @ (quad.phi_values(sp.mu, tau) * (sp.Vinv @ v))
    return phi_matrix(family, t, tau, quad) @ v


def psi_apply(family: GeneratorFamily, t: float, tau: float, v, quad: SubordinationQuadrature) -> np.ndarray:
    if tau <= 0:
        raise DomainError(f"psi is singular at tau = 0 and undefined below; got tau={tau}")
    v = np.asarray(v, dtype=float)
    sp = family.spectral(t)
    if sp is not None:
        w = sp.V @ (quad.psi_hat_values(sp.mu, tau) * (sp.Vinv @ v))
    else:
        w = psi_hat_matrix(family, t, tau, quad) @ v
    return tau ** (quad.alpha - 1.0) * w


# ------------------------------------------------------------ checks

def _norm22(family: GeneratorFamily, M: np.ndarray) -> float:
    s = np.sqrt(family.grid.weights)
    return float(np.linalg.norm(s[:, None] * M / s[None, :], 2))


def phi_psi_consistency(family: GeneratorFamily, t: float, s: float, quad: SubordinationQuadrature,
                        levels=(8, 16, 32, 64)) -> dict:
    """Compare ``phi_s(t-s)`` with ``(g_{1-alpha} * psi_s)(t-s)`` on a mesh ladder.

    The convolution uses piecewise-constant (midpoint) values of
    ``psi_hat`` against the exact weight ``r^(alpha-1)(g-r)^(-alpha)``, whose
    panel integrals are regularized incomplete Beta functions.  The mesh is
    graded as ``(i/n)^(2/alpha)`` because stiff modes of ``psi_hat`` vary on
    the scale ``|mu|^(-1/alpha)`` near ``r = 0``.
    """
    if not s < t:
        raise DomainError("phi_psi_consistency requires s < t")
    a = quad.alpha
    g = t - s
    lhs = phi_matrix(family, s, g, quad)
    B = math.gamma(a) * math.gamma(1.0 - a)
    errs = []
    for n in levels:
        edges = g * np.linspace(0.0, 1.0, n + 1) ** (2.0 / a)
        wts = B * np.diff(special.betainc(a, 1.0 - a, edges / g))
        rhs = sum(w * psi_hat_matrix(family, s, 0.5 * (l + r), quad)
                  for w, l, r in zip(wts, edges[:-1], edges[1:]))
        errs.append(_norm22(family, lhs - rhs / math.gamma(1.0 - a)))
    return {"levels": list(levels), "discrepancy": errs}


def derivative_check(family: GeneratorFamily, t: float, tau: float, quad: SubordinationQuadrature,
                     steps=(1e-2, 5e-3, 2.5e-3)) -> list[float]:
    """Central-difference ``d phi/d tau`` minus ``L psi`` for a step ladder."""
    L = family.matrix(t)
    target = L @ (tau ** (quad.alpha - 1.0) * psi_hat_matrix(family, t, tau, quad))
    out = []
    for h in steps:
        h = min(h, 0.5 * tau)
        d = (phi_matrix(family, t, tau + h, quad) - phi_matrix(family, t, tau - h, quad)) / (2 * h)
        out.append(_norm22(family, d - target) / max(_norm22(family, target), 1e-300))
    return out


def lemma_ratio_samples(family: GeneratorFamily, quad: SubordinationQuadrature, t: float,
                        pairs, taus) -> dict:
    """Normalized Holder ratios for the two psi-difference estimates.

    Returns, for each ``tau``, the max over ``(t1, t2)`` pairs of
    ``||(A(t1)-A(t2)) psi_t(tau)|| tau^alpha / |t1-t2|^theta`` and of
    ``||A(t)(psi_t1(tau)-psi_t2(tau))|| tau^alpha / |t1-t2|^theta``.
    """
    a, th = quad.alpha, family.holder_theta
    r1, r2 = [], []
    for tau in taus:
        psi_t = tau ** (a - 1) * psi_hat_matrix(family, t, tau, quad)
        m1 = m2 = 0.0
        for t1, t2 in pairs:
            d = abs(t1 - t2) ** th
            m1 = max(m1, _norm22(family, (family.A(t1) - family.A(t2)) @ psi_t) * tau ** a / d)
            dpsi = tau ** (a - 1) * (psi_hat_matrix(family, t1, tau, quad) - psi_hat_matrix(family, t2, tau, quad))
            m2 = max(m2, _norm22(family, family.A(t) @ dpsi) * tau ** a / d)
        r1.append(m1)
        r2.append(m2)
    return {"taus": list(taus), "diff_A_psi": r1, "A_diff_psi": r2}


# ------------------------------------------------- mode-exact hat weights

_GL8 = np.polynomial.legendre.leggauss(8)


def _ml_series_neg(alpha: float, beta: float, X: np.ndarray) -> np.ndarray:
    # sum_n (-X)^n / Gamma(alpha n + beta), used where X <= 1 (all terms tame)
    X = np.asarray(X, dtype=float)
    out = np.zeros_like(X)
    term_scale = np.ones_like(X)
    for n in range(4000):
        term = term_scale * special.rgamma(alpha * n + beta)
        out = out + term
        if n > 4 and np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(out), 1e-300)):
            return out
        term_scale = term_scale * (-X)
    raise QuadratureError("Mittag-Leffler series in hat weights did not converge")


def _cumulative_phi_integral(quad: SubordinationQuadrature, c: np.ndarray, lo: np.ndarray,
                             hi: np.ndarray) -> np.ndarray:
    """``int_lo^hi E_alpha(-c r^alpha) dr`` with ``0 < lo <= hi``, elementwise.

    Gauss-Legendre in ``log r`` on panels with ``hi/lo <= 8``: the integrand
    ``r E_alpha(-c r^alpha)`` is smooth in ``log r`` and varies on a scale of
    order ``1/alpha`` there.  Only entries with ``hi > lo`` are evaluated.
    """
    x, w = _GL8
    c, lo, hi = np.broadcast_arrays(c, lo, hi)
    out = np.zeros(c.shape)
    active = hi > lo
    if not np.any(active):
        return out
    ca, la, ha = c[active], np.log(lo[active]), np.log(hi[active])
    npan = np.maximum(1, np.ceil((ha - la) / np.log(8.0))).astype(int)
    step = (ha - la) / npan
    acc = np.zeros(ca.shape)
    for m in range(int(npan.max())):
        sel = npan > m
        mid = la[sel] + (m + 0.5) * step[sel]
        r = np.exp(mid[:, None] + 0.5 * step[sel][:, None] * x)
        acc[sel] += 0.5 * step[sel] * np.sum(w * r * quad.phi_values(-ca[sel][:, None], r), axis=-1)
    out[active] = acc
    return out


def psi_hat_weights(quad: SubordinationQuadrature, mu: np.ndarray, dist: np.ndarray) -> np.ndarray:
    """Exact product weights of ``r^(alpha-1) E_{alpha,alpha}(mu r^alpha)`` against hats.

    ``dist`` holds the distances ``d_i = t_k - t_i`` of the nodes ``0..k``
    of one row (decreasing, ``d_k = 0``).  Returns ``omega`` of shape
    ``(k+1, len(mu))`` such that, for every mode,
    ``int_0^{t_k} (t_k-s)^(alpha-1) E_{alpha,alpha}(mu (t_k-s)^alpha) f(s) ds``
    equals ``sum_i omega[i] f(t_i)`` whenever ``f`` is piecewise linear.

    Uses ``G0(x) = int_0^x r^(alpha-1) E_{alpha,alpha}(-c r^alpha) dr`` and
    ``G1(x) = int_0^x r^alpha E_{alpha,alpha}(-c r^alpha) dr`` with
    ``c = -mu``: power series where ``c x^alpha <= 1`` and otherwise
    ``G0 = (1 - E_alpha)/c``, ``G1 = (C(x) - x E_alpha)/c`` with
    ``C(x) = int_0^x E_alpha(-c r^alpha) dr`` accumulated from the point
    ``c r^alpha = 1``.
    """
    a = quad.alpha
    d = np.asarray(dist, dtype=float)[:, None]
    c = -np.asarray(mu, dtype=float)[None, :]
    X = c * d ** a
    small = X <= 1.0
    Xs = np.where(small, X, 0.0)
    G0 = d ** a * _ml_series_neg(a, a + 1.0, Xs)
    # (alpha n + alpha) / Gamma(alpha n + alpha + 2) = E_{a,a+1} - E_{a,a+2} termwise
    G1 = d ** (a + 1) * (_ml_series_neg(a, a + 1.0, Xs) - _ml_series_neg(a, a + 2.0, Xs))
    if not np.all(small):
        cpos = np.where(c > 0, c, 1.0)
        Ea = quad.phi_values(-c, d)
        G0 = np.where(small, G0, (1.0 - Ea) / cpos)
        rho0 = cpos ** (-1.0 / a)                       # where c r^alpha = 1
        C0 = rho0 * _ml_series_neg(a, 2.0, np.ones_like(cpos))
        # cumulative C along increasing distances (rows are stored decreasing)
        order = np.argsort(d[:, 0])
        ds = d[order]
        lo = np.maximum(np.vstack([np.zeros((1, 1)), ds[:-1]]), rho0)
        hi = np.maximum(ds, rho0)
        pieces = _cumulative_phi_integral(quad, np.broadcast_to(c, hi.shape), lo, hi)
        Cs = C0 + np.cumsum(pieces, axis=0)
        C = np.empty_like(Cs)
        C[order] = Cs
        G1 = np.where(small, G1, (C - d * Ea) / cpos)
    d0, d1 = d[:-1], d[1:]           # interval m spans distances [d1, d0]
    h = d0 - d1
    dG0 = G0[:-1] - G0[1:]
    dG1 = G1[:-1] - G1[1:]
    left = (dG1 - d1 * dG0) / h      # node m (distance d0)
    right = (d0 * dG0 - dG1) / h     # node m+1 (distance d1)
    omega = np.zeros((d.shape[0], c.shape[1]))
    omega[:-1] += left
    omega[1:] += right
    return omega
