"""Discretized non-autonomous generator families.

Sign convention: ``L(t)`` is the finite-difference image of the elliptic
operator ``sum a_ij d_ij + sum b_i d_i + c`` with homogeneous Dirichlet data;
its spectrum lies in the open left half-plane and ``T_t(tau) = exp(tau L(t))``.
The positive sectorial operator of the abstract theory is ``A(t) = -L(t)``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy import integrate

from .errors import DomainError, EllipticityError, ResolventError, SpectralError

CoefFn = Callable[[float, np.ndarray], np.ndarray]


# ------------------------------------------------------------------ grids

@dataclass(frozen=True)
class SpatialGrid:
    """Interior nodes of the unit interval/square, Dirichlet nodes removed.

    ``dim == 0`` denotes a single node of unit measure (scalar problems).
    """

    dim: int
    n_per_axis: int

    def __post_init__(self):
        if self.dim not in (0, 1, 2):
            raise DomainError(f"dim must be 0, 1 or 2, got {self.dim}")
        if self.n_per_axis < 1 or (self.dim == 0 and self.n_per_axis != 1):
            raise DomainError(f"invalid n_per_axis {self.n_per_axis} for dim {self.dim}")

    @classmethod
    def point(cls) -> "SpatialGrid":
        return cls(0, 1)

    @property
    def h(self) -> float:
        return 1.0 if self.dim == 0 else 1.0 / (self.n_per_axis + 1)

    @property
    def size(self) -> int:
        return self.n_per_axis ** self.dim if self.dim else 1

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.size, self.h ** self.dim)

    @property
    def points(self) -> np.ndarray:
        if self.dim == 0:
            return np.zeros((1, 0))
        x = self.h * np.arange(1, self.n_per_axis + 1)
        if self.dim == 1:
            return x[:, None]
        xx, yy = np.meshgrid(x, x, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])


def lp_norm(v, grid: SpatialGrid, p: float) -> float:
    """Discrete ``L^p(sigma)`` norm, ``sigma_i = h**dim``."""
    if p < 1:
        raise DomainError(f"lp_norm requires p >= 1, got {p}")
    v = np.abs(np.asarray(v, dtype=float))
    if math.isinf(p):
        return float(v.max(initial=0.0))
    w = grid.weights
    if p == 2:
        return float(math.sqrt(np.dot(w, v * v)))
    vmax = v.max(initial=0.0)
    if vmax == 0:
        return 0.0
    return float(vmax * np.dot(w, (v / vmax) ** p) ** (1.0 / p))


EXACT_NORM_PAIRS = {(1, 1), (2, 2), (math.inf, math.inf), (1, 2), (2, math.inf), (1, math.inf)}


def operator_norm(M, grid: SpatialGrid, p: float, q: float) -> float:
    """Exact ``L^p -> L^q`` norm of a matrix on the weighted grid.

    Supported: the listed exact pairs, plus any ``(1, q)`` (extreme points of
    the ``L^1`` ball are scaled point masses) and any ``(p, inf)`` (row-wise
    duality).
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    s = grid.weights
    if p == 1:
        cols = np.abs(M) / s[None, :]
        if q == 1:
            return float(np.max(s @ cols))
        return max(lp_norm(cols[:, j], grid, q) for j in range(M.shape[1]))
    if math.isinf(q):
        rows = np.abs(M) / s[None, :]
        pd = 1.0 if math.isinf(p) else (math.inf if p == 1 else p / (p - 1.0))
        if math.isinf(pd):
            return float(rows.max())
        return max(float(np.dot(s, rows[i] ** pd) ** (1.0 / pd)) for i in range(M.shape[0]))
    if p == 2 and q == 2:
        r = np.sqrt(s)
        return float(np.linalg.norm(r[:, None] * M / r[None, :], 2))
    raise DomainError(f"unsupported norm pair ({p}, {q})")


def operator_norm_bound(M, grid: SpatialGrid, p: float, q: float) -> float:
    """Exact norm when available, else a Riesz-Thorin upper bound.

    For ``1 < p <= q < inf`` the segment through ``(1, q/p)`` and
    ``(inf, inf)`` gives ``||M||_{p->q} <= ||M||_{1->q/p}^(1/p)
    ||M||_{inf->inf}^(1-1/p)``.  For ``p == 2`` the segment through
    ``(2, 2)`` and ``(2, inf)`` gives a second bound; the smaller is
    returned.  The interpolation constant is 1 for positivity preserving
    matrices (the presets' heat-type operators); in general real
    interpolation may lose a factor up to 2.
    """
    try:
        return operator_norm(M, grid, p, q)
    except DomainError:
        if not (1 < p <= q < math.inf):
            raise
    bounds = [operator_norm(M, grid, 1, q / p) ** (1.0 / p) * operator_norm(M, grid, math.inf, math.inf) ** (1.0 - 1.0 / p)]
    if p == 2:
        th = 2.0 / q
        bounds.append(operator_norm(M, grid, 2, 2) ** th * operator_norm(M, grid, 2, math.inf) ** (1 - th))
    return float(min(bounds))


# ------------------------------------------------------------ coefficients

@dataclass
class CoefficientSet:
    """Coefficients of ``sum a_ij d_ij + sum b_i d_i + c``.

    ``a(t, X)`` returns shape ``(N, dim, dim)``, ``b(t, X)`` shape ``(N, dim)``
    and ``c(t, X)`` shape ``(N,)`` for node coordinates ``X`` of shape
    ``(N, dim)``.
    """

    a: CoefFn
    b: CoefFn | None = None
    c: CoefFn | None = None
    holder_theta: float = 1.0
    holder_const: float = 0.0
    autonomous: bool = False
    ellipticity_floor: float = 1e-8


def _check_ellipticity(a: np.ndarray, floor: float, xi: np.ndarray) -> None:
    sym_err = np.max(np.abs(a - np.swapaxes(a, 1, 2)), initial=0.0)
    if sym_err > 1e-12:
        raise EllipticityError(f"diffusion matrix not symmetric (max asymmetry {sym_err:.2e})")
    # xi: (8, dim) unit directions sampled per node
    quad = np.einsum("kd,nde,ke->nk", xi, a, xi)
    worst = float(quad.min())
    if worst < floor:
        node = int(np.unravel_index(np.argmin(quad), quad.shape)[0])
        raise EllipticityError(f"ellipticity violated at node {node}: {worst:.3e} < {floor:.1e}")


def _assemble_fd(grid: SpatialGrid, coeffs: CoefficientSet, t: float, xi: np.ndarray) -> np.ndarray:
    X = grid.points
    N, d, n, h = grid.size, grid.dim, grid.n_per_axis, grid.h
    a = np.asarray(coeffs.a(t, X), dtype=float).reshape(N, d, d)
    _check_ellipticity(a, coeffs.ellipticity_floor, xi)
    b = np.zeros((N, d)) if coeffs.b is None else np.asarray(coeffs.b(t, X), dtype=float).reshape(N, d)
    c = np.zeros(N) if coeffs.c is None else np.asarray(coeffs.c(t, X), dtype=float).reshape(N)
    L = np.zeros((N, N))
    idx = np.arange(N).reshape((n,) * d)
    shape = (n,) * d

    def add(row_sel, offset, vals):
        # adds vals[node] to L[node, node+offset] where the neighbour is interior
        for node in range(N):
            mi = np.unravel_index(node, shape)
            nb = tuple(int(mi[k] + offset[k]) for k in range(d))
            if all(0 <= nb[k] < n for k in range(d)):
                L[node, idx[nb]] += vals[node]

    h2 = h * h
    for i in range(d):
        e = [0] * d
        e[i] = 1
        em = [-v for v in e]
        L[np.arange(N), np.arange(N)] += -2.0 * a[:, i, i] / h2
        add(None, e, a[:, i, i] / h2 + b[:, i] / (2 * h))
        add(None, em, a[:, i, i] / h2 - b[:, i] / (2 * h))
    if d == 2:
        # 2 a_12 d_12 with the 4-point cross difference
        w = 2.0 * a[:, 0, 1] / (4.0 * h2)
        add(None, (1, 1), w)
        add(None, (-1, -1), w)
        add(None, (1, -1), -w)
        add(None, (-1, 1), -w)
    L[np.arange(N), np.arange(N)] += c
    return L


# -------------------------------------------------------------- spectral

@dataclass
class Spectral:
    """Real eigen-decomposition ``L = V diag(mu) V^{-1}``."""

    mu: np.ndarray
    V: np.ndarray
    Vinv: np.ndarray
    symmetric: bool

    def apply_fn(self, values: np.ndarray) -> np.ndarray:
        """Matrix ``V diag(values) V^{-1}``; ``values`` may carry leading batch axes."""
        values = np.asarray(values)
        return np.einsum("ab,...b,bc->...ac", self.V, values, self.Vinv)


def _diagonal_symmetrizer(L: np.ndarray) -> np.ndarray | None:
    # d with D^{-1} L D symmetric exists iff off-diagonal pairs have matching
    # sign pattern and the cycle products agree; built by a BFS over the graph.
    N = L.shape[0]
    off = (L != 0) & ~np.eye(N, dtype=bool)
    if not np.array_equal(off, off.T) or np.any(L[off] * L.T[off] <= 0):
        return None
    d = np.full(N, np.nan)
    for root in range(N):
        if not np.isnan(d[root]):
            continue
        d[root] = 1.0
        stack = [root]
        while stack:
            i = stack.pop()
            for j in np.nonzero(off[i])[0]:
                if np.isnan(d[j]):
                    d[j] = d[i] * math.sqrt(L[j, i] / L[i, j])
                    stack.append(j)
    S = L * d[None, :] / d[:, None]
    if np.max(np.abs(S - S.T)) > 1e-12 * np.max(np.abs(S)):
        return None
    return d


def spectral_decomposition(L: np.ndarray) -> Spectral | None:
    """Real spectral decomposition or ``None`` when none is reliable."""
    L = np.asarray(L, dtype=float)
    scale = max(np.max(np.abs(L)), 1e-300)
    if np.max(np.abs(L - L.T)) <= 1e-14 * scale:
        mu, W = np.linalg.eigh(0.5 * (L + L.T))
        return Spectral(mu, W, W.T.copy(), True)
    d = _diagonal_symmetrizer(L)
    if d is not None:
        S = L * d[None, :] / d[:, None]
        mu, W = np.linalg.eigh(0.5 * (S + S.T))
        return Spectral(mu, d[:, None] * W, W.T / d[None, :], True)
    mu, V = np.linalg.eig(L)
    if np.max(np.abs(mu.imag)) > 1e-9 * scale or np.linalg.cond(V) > 1e8:
        return None
    V = V.real
    return Spectral(mu.real, V, np.linalg.inv(V), False)


# --------------------------------------------------------------- family

_XI_RNG_SEED = 20240611


class GeneratorFamily:
    """Time-indexed family ``t -> L(t)`` with memoized assembly.

    Either built from a :class:`CoefficientSet` on a :class:`SpatialGrid` or
    from an explicit ``matrix_fn`` (used for scalar test families).  The
    memo dictionaries are guarded by a lock, so concurrent readers are safe
    and duplicate fills are idempotent.
    """

    def __init__(self, grid: SpatialGrid, coeffs: CoefficientSet | None = None, *,
                 matrix_fn: Callable[[float], np.ndarray] | None = None,
                 T: float = 1.0, sector_angle: float = math.pi / 4,
                 holder_theta: float | None = None, autonomous: bool | None = None,
                 name: str = ""):
        if (coeffs is None) == (matrix_fn is None):
            raise ValueError("give exactly one of coeffs or matrix_fn")
        if not 0 < sector_angle < math.pi / 2:
            raise DomainError("sector_angle must lie in (0, pi/2)")
        self.grid = grid
        self.coeffs = coeffs
        self._matrix_fn = matrix_fn
        self.T = float(T)
        self.sector_angle = sector_angle
        self.name = name
        if coeffs is not None:
            self.holder_theta = coeffs.holder_theta if holder_theta is None else holder_theta
            self.autonomous = coeffs.autonomous if autonomous is None else autonomous
        else:
            self.holder_theta = 1.0 if holder_theta is None else holder_theta
            self.autonomous = bool(autonomous)
        rng = np.random.default_rng(_XI_RNG_SEED)
        xi = rng.normal(size=(8, max(grid.dim, 1)))[:, : grid.dim]
        self._xi = xi / np.maximum(np.linalg.norm(xi, axis=1, keepdims=True), 1e-300)
        self._lock = threading.Lock()
        self._mats: dict[float, np.ndarray] = {}
        self._specs: dict[float, Spectral | None] = {}

    @property
    def size(self) -> int:
        return self.grid.size

    def _key(self, t: float) -> float:
        return 0.0 if self.autonomous else float(t)

    def matrix(self, t: float) -> np.ndarray:
        """``L(t)``; the returned array is shared and must not be mutated."""
        if not (-1e-12 <= t <= self.T * (1 + 1e-12)):
            raise DomainError(f"t={t} outside [0, {self.T}]")
        key = self._key(t)
        with self._lock:
            hit = self._mats.get(key)
        if hit is not None:
            return hit
        if self._matrix_fn is not None:
            L = np.atleast_2d(np.asarray(self._matrix_fn(key), dtype=float))
        else:
            L = _assemble_fd(self.grid, self.coeffs, key, self._xi)
        L.setflags(write=False)
        with self._lock:
            return self._mats.setdefault(key, L)

    def A(self, t: float) -> np.ndarray:
        return -self.matrix(t)

    def spectral(self, t: float) -> Spectral | None:
        key = self._key(t)
        with self._lock:
            if key in self._specs:
                return self._specs[key]
        sp = spectral_decomposition(self.matrix(t))
        with self._lock:
            return self._specs.setdefault(key, sp)


def assemble(family: GeneratorFamily, t: float) -> np.ndarray:
    return family.matrix(t).copy()


# ------------------------------------------------------ semigroup & powers

def semigroup_matrix(family: GeneratorFamily, t: float, tau: float) -> np.ndarray:
    if tau < 0:
        raise DomainError(f"semigroup requires tau >= 0, got {tau}")
    if tau == 0:
        return np.eye(family.size)
    sp = family.spectral(t)
    if sp is not None:
        return sp.apply_fn(np.exp(tau * sp.mu))
    return sla.expm(tau * family.matrix(t))


def semigroup_apply(family: GeneratorFamily, t: float, tau: float, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if tau == 0:
        return v.copy()
    if tau < 0:
        raise DomainError(f"semigroup requires tau >= 0, got {tau}")
    sp = family.spectral(t)
    if sp is not None:
        return sp.V @ (np.exp(tau * sp.mu) * (sp.Vinv @ v))
    return sla.expm(tau * family.matrix(t)) @ v


def _negative_spectral(family: GeneratorFamily, t: float) -> Spectral:
    sp = family.spectral(t)
    if sp is None:
        raise SpectralError("generator is not diagonalizable with real spectrum")
    if np.max(sp.mu) >= 0:
        raise SpectralError(f"spectrum not negative (max eigenvalue {np.max(sp.mu):.3e})")
    return sp


def fractional_power_apply(family: GeneratorFamily, t: float, nu: float, v) -> np.ndarray:
    """``(-L(t))**nu v`` by spectral calculus, ``0 < nu < 1``."""
    if not 0 < nu < 1:
        raise DomainError(f"nu must lie in (0, 1), got {nu}")
    sp = _negative_spectral(family, t)
    return sp.V @ ((-sp.mu) ** nu * (sp.Vinv @ np.asarray(v, dtype=float)))


def negative_power_apply(family: GeneratorFamily, t: float, nu: float, v) -> np.ndarray:
    sp = _negative_spectral(family, t)
    return sp.V @ ((-sp.mu) ** (-nu) * (sp.Vinv @ np.asarray(v, dtype=float)))


def negative_power_quadrature(family: GeneratorFamily, t: float, nu: float, v) -> np.ndarray:
    """``A(t)^{-nu} v`` from the resolvent integral with ``s = u**(1/(1-nu))``.

    Independent of the eigen-decomposition; used as a cross-check.
    """
    A = family.A(t)
    v = np.asarray(v, dtype=float)
    I = np.eye(A.shape[0])
    k = 1.0 / (1.0 - nu)

    def f(u):
        return np.linalg.solve(u ** k * I + A, v)

    val, _ = integrate.quad_vec(f, 0.0, np.inf, epsabs=1e-13, epsrel=1e-11, limit=2000)
    return math.sin(math.pi * nu) / math.pi * k * val


# ------------------------------------------------------ AT conditions

@dataclass
class ATReport:
    M_est: float
    L_est: float
    theta_fit: float
    samples: list = field(default_factory=list)


DEFAULT_LAMBDAS = tuple(-(10.0 ** k) for k in range(-2, 4))


def resolvent_norm(family: GeneratorFamily, t: float, lam: complex) -> float:
    A = family.A(t)
    N = A.shape[0]
    try:
        R = np.linalg.solve(lam * np.eye(N) - A, np.eye(N))
    except np.linalg.LinAlgError as exc:
        raise ResolventError(f"lambda={lam} is in the spectrum of A({t})") from exc
    s = np.sqrt(family.grid.weights)
    return float(np.linalg.norm(s[:, None] * R / s[None, :], 2))


def check_at_conditions(family: GeneratorFamily, probe_ts: Sequence[float],
                        probe_lambdas: Sequence[complex] = DEFAULT_LAMBDAS) -> ATReport:
    """Sample the resolvent bound and the Holder continuity of ``A(t)A(tau)^{-1}``.

    The Holder pairs are ``(probe_ts[0], t)`` for the remaining probes, with
    ``tau = probe_ts[0]``; ``theta_fit`` is the log-log slope and ``L_est``
    the smallest constant covering every sample at that exponent.  An
    autonomous family reports ``L_est = 0`` and ``theta_fit = 1``.
    """
    samples = []
    M_est = 0.0
    for t in probe_ts:
        for lam in probe_lambdas:
            if abs(np.angle(lam)) < family.sector_angle:
                raise DomainError(f"probe lambda={lam} lies inside the sector")
            val = (1.0 + abs(lam)) * resolvent_norm(family, t, lam)
            samples.append(("resolvent", t, None, None, lam, val))
            M_est = max(M_est, val)
    base = probe_ts[0]
    Ainv = np.linalg.inv(family.A(base))
    s = np.sqrt(family.grid.weights)
    gaps, vals = [], []
    for t in probe_ts[1:]:
        D = (family.A(t) - family.A(base)) @ Ainv
        val = float(np.linalg.norm(s[:, None] * D / s[None, :], 2))
        samples.append(("holder", t, base, base, None, val))
        gaps.append(abs(t - base))
        vals.append(val)
    gaps, vals = np.array(gaps), np.array(vals)
    ok = (gaps > 0) & (vals > 1e-14)
    if ok.sum() < 2:
        return ATReport(M_est, float(vals.max(initial=0.0)), 1.0, samples)
    slope, _ = np.polyfit(np.log(gaps[ok]), np.log(vals[ok]), 1)
    theta_fit = float(slope)
    L_est = float(np.max(vals[ok] / gaps[ok] ** theta_fit))
    return ATReport(M_est, L_est, theta_fit, samples)


# ------------------------------------------------------------- presets

def _const_a(dim, fn):
    def a(t, X):
        N = X.shape[0]
        vals = np.asarray(fn(t, X), dtype=float)
        if vals.ndim == 0:
            vals = np.full(N, float(vals))
        return vals[:, None, None] * np.eye(dim)[None]
    return a


def _ellipse_a(t, X):
    m = np.array([[1.0 + 0.3 * t, 0.1], [0.1, 1.0 - 0.2 * t]])
    return np.broadcast_to(m, (X.shape[0], 2, 2)).copy()


PRESETS = {
    "laplace-1d": dict(dim=1, coeffs=lambda T: CoefficientSet(
        a=_const_a(1, lambda t, X: 1.0), autonomous=True)),
    "lipschitz-1d": dict(dim=1, coeffs=lambda T: CoefficientSet(
        a=_const_a(1, lambda t, X: 1.0 + 0.1 * t), holder_theta=1.0, holder_const=0.1)),
    "timevarying-1d": dict(dim=1, coeffs=lambda T: CoefficientSet(
        a=_const_a(1, lambda t, X: 1.0 + 0.5 * t * (1.0 + X[:, 0])),
        b=lambda t, X: np.full((X.shape[0], 1), 0.5 * t),
        c=lambda t, X: -t * np.ones(X.shape[0]),
        holder_theta=1.0, holder_const=1.0)),
    "holder-1d": dict(dim=1, coeffs=lambda T: CoefficientSet(
        a=_const_a(1, lambda t, X: 1.0 + 0.3 * abs(t - 0.5 * T) ** 0.5),
        holder_theta=0.5, holder_const=0.3)),
    "laplace-2d": dict(dim=2, coeffs=lambda T: CoefficientSet(
        a=_const_a(2, lambda t, X: 1.0), autonomous=True)),
    "timevarying-ellipse-2d": dict(dim=2, coeffs=lambda T: CoefficientSet(
        a=_ellipse_a, holder_theta=1.0, holder_const=0.3)),
}


def scalar_family(lam: float, eps: float = 0.0, T: float = 1.0) -> GeneratorFamily:
    """1x1 family ``A(t) = lam (1 + eps t)``, i.e. ``L(t) = -lam (1 + eps t)``."""
    return GeneratorFamily(SpatialGrid.point(), matrix_fn=lambda t: [[-lam * (1.0 + eps * t)]],
                           T=T, autonomous=(eps == 0.0), name=f"scalar(lam={lam},eps={eps})")


def build_family(preset: str, n: int = 15, T: float = 1.0, **kw) -> GeneratorFamily:
    """Family from the preset registry; ``"scalar"`` takes ``lam`` and ``eps``."""
    if preset == "scalar":
        return scalar_family(kw.get("lam", 1.0), kw.get("eps", 0.0), T)
    if preset not in PRESETS:
        raise DomainError(f"unknown preset {preset!r}; known: {sorted(PRESETS) + ['scalar']}")
    spec = PRESETS[preset]
    grid = SpatialGrid(spec["dim"], n)
    return GeneratorFamily(grid, spec["coeffs"](T), T=T, name=preset)
