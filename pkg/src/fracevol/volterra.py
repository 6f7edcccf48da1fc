"""Correction kernels and solution operators on a time grid.

All operator tables are dense arrays of shape ``(K+1, K+1, n, n)`` indexed by
``(k, j)`` for the time pair ``(t_k, t_j)``.  With ``L = -A``

    Q~(t, tau) = (L(t) - L(tau)) phi_tau(t - tau)
    R~(t, tau) = (L(t) - L(tau)) psi_tau(t - tau)
    Q = Q~ + int_tau^t R~(t, s) Q(s, tau) ds,   R likewise,
    U(t, tau) = int_tau^t psi_s(t - s) Q(s, tau) ds,   V likewise,
    S = phi + U,   P = psi + V.

Integrals carrying the ``(t - s)^(alpha-1)`` factor of ``psi`` use product
integration: the weight is integrated exactly against piecewise-linear hats
of the regularized integrand.  On the grid the integral operators become
block-lower-triangular matrices of size ``(K+1) n``, so each Neumann sweep
is one matrix product.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, VolterraConvergenceError
from .generator import GeneratorFamily
from .subordination import SubordinationQuadrature

MAX_ITER = 50
DEFAULT_TOL = 1e-8


# ------------------------------------------------------------- time grid

def default_grading(alpha: float) -> float:
    """Grading exponent ``r = max(1, 0.5 max(1, 2/alpha - 1))`` to one decimal."""
    return max(1.0, round(0.5 * max(1.0, 2.0 / alpha - 1.0), 1))


@dataclass(frozen=True)
class TimeGrid:
    """Graded grid ``t_k = T (k/K)^r``, ``k = 0..K``, or an explicit node list.

    Explicit nodes arise when a solution is continued: the old nodes are
    kept and new ones appended (see :meth:`extend`).
    """

    T: float
    K: int
    r: float = 1.0
    explicit: tuple | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError(f"T must be positive, got {self.T}")
        if self.K < 1:
            raise DomainError(f"K must be at least 1, got {self.K}")
        if self.r < 1:
            raise DomainError(f"grading r must be >= 1, got {self.r}")
        if self.explicit is not None:
            x = np.asarray(self.explicit, dtype=float)
            if len(x) != self.K + 1 or x[0] != 0.0 or not np.all(np.diff(x) > 0) or x[-1] != self.T:
                raise DomainError("explicit nodes must increase strictly from 0 to T with K+1 entries")

    @property
    def nodes(self) -> np.ndarray:
        if self.explicit is not None:
            return np.array(self.explicit, dtype=float)
        return self.T * (np.arange(self.K + 1) / self.K) ** self.r

    @property
    def min_step(self) -> float:
        return float(np.min(np.diff(self.nodes)))

    def extend(self, T_new: float, K_new: int) -> "TimeGrid":
        """Append ``K_new`` uniform steps up to ``T_new``."""
        if not T_new > self.T:
            raise DomainError("extension must end after the current horizon")
        tail = np.linspace(self.T, T_new, K_new + 1)[1:]
        nodes = np.concatenate([self.nodes, tail])
        nodes[-1] = T_new
        return TimeGrid(float(T_new), len(nodes) - 1, 1.0, tuple(float(x) for x in nodes))


def product_weights(alpha: float, nodes: np.ndarray) -> np.ndarray:
    """Weights ``W[k, i]`` with ``int_0^{t_k} (t_k-s)^(alpha-1) f(s) ds ~ sum_i W[k,i] f(t_i)``.

    ``f`` is replaced by its piecewise-linear interpolant, so the rule is
    exact for the weight and second order in the smooth factor.  Row ``k``
    only touches nodes ``0..k``.
    """
    t = np.asarray(nodes, dtype=float)
    K = len(t) - 1
    W = np.zeros((K + 1, K + 1))
    for k in range(1, K + 1):
        d0 = t[k] - t[:k]          # distances to left ends
        d1 = t[k] - t[1:k + 1]     # distances to right ends
        h = t[1:k + 1] - t[:k]
        I0 = (d0 ** alpha - d1 ** alpha) / alpha
        I1 = (d0 ** (alpha + 1) - d1 ** (alpha + 1)) / (alpha + 1)
        b = (d0 * I0 - I1) / h      # weight of the right node
        a = I0 - b                  # weight of the left node
        W[k, :k] += a
        W[k, 1:k + 1] += b
    return W


# ---------------------------------------------------------------- tables

def to_block(table: np.ndarray) -> np.ndarray:
    K1, _, n, _ = table.shape
    return table.transpose(0, 2, 1, 3).reshape(K1 * n, K1 * n)


def from_block(block: np.ndarray, K1: int, n: int) -> np.ndarray:
    return block.reshape(K1, n, K1, n).transpose(0, 2, 1, 3).copy()


def block_norms(table: np.ndarray) -> np.ndarray:
    """Frobenius norm of every ``(k, j)`` entry (an upper bound for the 2-norm)."""
    return np.sqrt(np.sum(table * table, axis=(2, 3)))


@dataclass
class KernelTable:
    """Strictly lower-triangular table of kernel values at ``(t_k, t_j)``, ``j < k``."""

    entries: np.ndarray
    nodes: np.ndarray
    singularity_exponent: float
    iterations: int = 0
    changes: list = field(default_factory=list)
    residual: float = 0.0

    def __post_init__(self):
        K1 = len(self.nodes)
        mask = np.tril(np.ones((K1, K1), dtype=bool), -1)
        self.entries[~mask] = 0.0

    def __getitem__(self, kj) -> np.ndarray:
        k, j = kj
        if not 0 <= j < k < len(self.nodes):
            raise KeyError(f"kernel tables hold only pairs j < k, got {kj}")
        return self.entries[k, j]

    def norms(self):
        """``(gaps, frobenius_norms)`` over all stored pairs."""
        k, j = np.tril_indices(len(self.nodes), -1)
        return self.nodes[k] - self.nodes[j], block_norms(self.entries)[k, j]


@dataclass
class SolutionOperatorTable:
    """``S[k, j] = S_alpha(t_k, t_j)`` and ``P_weighted[k, j] = (t_k-t_j)^(1-alpha) P_alpha(t_k, t_j)``.

    Both are filled for ``j <= k``; the diagonal holds the zero-gap limits
    ``I`` and ``I/Gamma(alpha)``.  ``forcing[k, i]`` are the quadrature
    weights of ``int_0^{t_k} P_alpha(t_k, s) g(s) ds ~ sum_i forcing[k, i] g(t_i)``
    for piecewise-linear ``g``.
    """

    S: np.ndarray
    P_weighted: np.ndarray
    nodes: np.ndarray
    alpha: float
    forcing: np.ndarray | None = None

    def gap(self, k: int, j: int) -> float:
        return float(self.nodes[k] - self.nodes[j])


@dataclass
class _Subordinated:
    phi: np.ndarray       # phi_{t_j}(t_k - t_j), j <= k
    psi_hat: np.ndarray   # psi_hat_{t_j}(t_k - t_j), j <= k
    dL: np.ndarray        # L(t_k) - L(t_j)


def _subordinated(family: GeneratorFamily, tg: TimeGrid, quad: SubordinationQuadrature) -> _Subordinated:
    t = tg.nodes
    K1, n = len(t), family.size
    phi = np.zeros((K1, K1, n, n))
    psi = np.zeros((K1, K1, n, n))
    Ls = np.stack([family.matrix(tk) for tk in t])
    for j in range(K1):
        gaps = t[j:] - t[j]
        sp = family.spectral(t[j])
        if sp is not None:
            phi[j:, j] = sp.apply_fn(quad.phi_values(sp.mu[None, :], gaps[:, None]))
            psi[j:, j] = sp.apply_fn(quad.psi_hat_values(sp.mu[None, :], gaps[:, None]))
        else:
            from .subordination import phi_matrix, psi_hat_matrix
            for m, g in enumerate(gaps):
                phi[j + m, j] = phi_matrix(family, t[j], g, quad)
                psi[j + m, j] = psi_hat_matrix(family, t[j], g, quad)
    dL = Ls[:, None] - Ls[None, :]
    return _Subordinated(phi, psi, dL)


def qtilde(family: GeneratorFamily, t: float, tau: float, quad: SubordinationQuadrature) -> np.ndarray:
    from .subordination import phi_matrix
    if not tau < t:
        raise DomainError("qtilde requires tau < t")
    if family.autonomous:
        return np.zeros((family.size, family.size))
    return (family.matrix(t) - family.matrix(tau)) @ phi_matrix(family, tau, t - tau, quad)


def rtilde(family: GeneratorFamily, t: float, tau: float, quad: SubordinationQuadrature) -> np.ndarray:
    from .subordination import psi_hat_matrix
    if not tau < t:
        raise DomainError("rtilde requires tau < t")
    if family.autonomous:
        return np.zeros((family.size, family.size))
    g = t - tau
    return g ** (quad.alpha - 1) * (family.matrix(t) - family.matrix(tau)) @ psi_hat_matrix(family, tau, g, quad)


def _volterra_system(sub: _Subordinated, t: np.ndarray, alpha: float):
    """Block operator ``M`` of the discrete integral and the stacked right side ``[Q~ R~]``."""
    K1 = len(t)
    n = sub.phi.shape[-1]
    W = product_weights(alpha, t)
    lower = np.tril(np.ones((K1, K1)), -1)[:, :, None, None]
    gaps = t[:, None] - t[None, :]
    gpow = np.where(gaps > 0, gaps, 1.0) ** (alpha - 1.0)
    Rhat = lower * np.matmul(sub.dL, sub.psi_hat)
    Qt = lower * np.matmul(sub.dL, sub.phi)
    Rt = gpow[:, :, None, None] * Rhat
    M = to_block(W[:, :, None, None] * Rhat)
    return M, np.hstack([to_block(Qt), to_block(Rt)]), K1, n


def resolve_kernels(family: GeneratorFamily, tg: TimeGrid, quad: SubordinationQuadrature,
                    tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER,
                    _sub: _Subordinated | None = None):
    """Neumann iteration for ``Q`` and ``R`` under product integration.

    Iterates until the sup over pairs of the Frobenius change drops below
    ``tol``.  Raises :class:`VolterraConvergenceError` after ``max_iter``
    sweeps.  Autonomous families return zero tables after one sweep.
    """
    theta, alpha = family.holder_theta, quad.alpha
    omega_bar = theta - alpha + 1.0
    if omega_bar <= 0:
        raise DomainError(f"omega_bar = theta - alpha + 1 must be positive, got {omega_bar}")
    t = tg.nodes
    K1, n = len(t), family.size
    if family.autonomous:
        Z = np.zeros((K1, K1, n, n))
        return (KernelTable(Z, t, omega_bar - 1, 1, [0.0]),
                KernelTable(Z.copy(), t, theta - 1, 1, [0.0]))
    sub = _sub if _sub is not None else _subordinated(family, tg, quad)
    M, rhs, K1, n = _volterra_system(sub, t, alpha)
    X = rhs.copy()
    changes = []
    for it in range(1, max_iter + 1):
        Xn = rhs + M @ X
        d = Xn - X
        change = float(np.sqrt(np.max(_pair_sq(d, K1, n))))
        changes.append(change)
        X = Xn
        if change < tol:
            break
    else:
        raise VolterraConvergenceError(
            f"Neumann iteration did not reach tol={tol} in {max_iter} sweeps (last change {changes[-1]:.3e}); "
            "refine the grid or shorten the horizon")
    res = float(np.sqrt(np.max(_pair_sq(X - rhs - M @ X, K1, n))))
    half = K1 * n
    Q = KernelTable(from_block(X[:, :half], K1, n), t, omega_bar - 1, it, changes, res)
    R = KernelTable(from_block(X[:, half:], K1, n), t, theta - 1, it, changes, res)
    return Q, R


def _pair_sq(block: np.ndarray, K1: int, n: int) -> np.ndarray:
    # squared Frobenius norm of every n x n pair block of a (K1 n) x (m K1 n) array
    b = block.reshape(K1, n, -1, n)
    return np.sum(b * b, axis=(1, 3))


def volterra_residual(family: GeneratorFamily, tg: TimeGrid, quad: SubordinationQuadrature,
                      Q: KernelTable, R: KernelTable) -> float:
    """Sup over pairs of the Frobenius residual of both Volterra equations."""
    if family.autonomous:
        return float(max(np.abs(Q.entries).max(), np.abs(R.entries).max()))
    sub = _subordinated(family, tg, quad)
    M, rhs, K1, n = _volterra_system(sub, tg.nodes, quad.alpha)
    X = np.hstack([to_block(Q.entries), to_block(R.entries)])
    return float(np.sqrt(np.max(_pair_sq(X - rhs - M @ X, K1, n))))


def _frozen_weights(family: GeneratorFamily, tg: TimeGrid, quad: SubordinationQuadrature):
    """Mode-exact weights ``Omega[k, i]`` and frozen values ``psi_hat_{t_k}(t_k - t_i)``.

    ``Omega[k, i]`` integrates ``psi_{t_k}(t_k - s)`` exactly against the hat
    of node ``i`` on ``[0, t_k]``, with the generator frozen at ``t_k``.
    Without a spectral decomposition it falls back to the plain product
    weights times the frozen values.
    """
    from .subordination import psi_hat_matrix, psi_hat_weights
    t = tg.nodes
    K1, n = len(t), family.size
    omega = np.zeros((K1, K1, n, n))
    frozen = np.zeros((K1, K1, n, n))
    W = None
    for k in range(K1):
        d = t[k] - t[:k + 1]
        sp = family.spectral(t[k])
        if sp is not None:
            frozen[k, :k + 1] = sp.apply_fn(quad.psi_hat_values(sp.mu[None, :], d[:, None]))
            if k > 0:
                omega[k, :k + 1] = sp.apply_fn(psi_hat_weights(quad, sp.mu, d))
        else:
            if W is None:
                W = product_weights(quad.alpha, t)
            for i in range(k + 1):
                frozen[k, i] = psi_hat_matrix(family, t[k], d[i], quad)
                omega[k, i] = W[k, i] * frozen[k, i]
    return omega, frozen


def assemble_solution_operators(family: GeneratorFamily, tg: TimeGrid, Q: KernelTable, R: KernelTable,
                                quad: SubordinationQuadrature,
                                _sub: _Subordinated | None = None) -> SolutionOperatorTable:
    """Assemble ``S``, the regularized ``P`` and the forcing weights.

    Integrals of ``psi_s(t_k - s) F(s)`` split as the frozen part
    ``psi_{t_k}(t_k - s) F(s)``, integrated with the mode-exact weights, plus
    the remainder ``(psi_s - psi_{t_k})(t_k - s) F(s)``, which vanishes on the
    diagonal and uses the plain product weights.
    """
    t = tg.nodes
    K1, n = len(t), family.size
    alpha = quad.alpha
    sub = _sub if _sub is not None else _subordinated(family, tg, quad)
    S = sub.phi.copy()
    P = sub.psi_hat.copy()
    eye = np.eye(n)
    W = product_weights(alpha, t)
    incl = np.tril(np.ones((K1, K1)))[:, :, None, None]
    omega, frozen = _frozen_weights(family, tg, quad)
    if not family.autonomous:
        Psi = to_block(incl * (omega + W[:, :, None, None] * (sub.psi_hat - frozen)))
        UV = Psi @ np.hstack([to_block(Q.entries), to_block(R.entries)])
        half = K1 * n
        U = from_block(UV[:, :half], K1, n)
        V = from_block(UV[:, half:], K1, n)
        gaps = t[:, None] - t[None, :]
        S += U
        P += np.where(gaps > 0, gaps, 0.0)[:, :, None, None] ** (1.0 - alpha) * V
    upper = np.triu(np.ones((K1, K1), dtype=bool), 1)
    S[upper] = 0.0
    P[upper] = 0.0
    idx = np.arange(K1)
    S[idx, idx] = eye
    P[idx, idx] = eye / math.gamma(alpha)
    forcing = incl * (omega + W[:, :, None, None] * (P - frozen))
    return SolutionOperatorTable(S, P, t, alpha, forcing)


def build_operators(family: GeneratorFamily, tg: TimeGrid, quad: SubordinationQuadrature,
                    tol: float = DEFAULT_TOL):
    """Convenience pipeline: kernels then solution operators, sharing the subordinated tables."""
    sub = _subordinated(family, tg, quad)
    Q, R = resolve_kernels(family, tg, quad, tol, _sub=sub)
    return Q, R, assemble_solution_operators(family, tg, Q, R, quad, _sub=sub)


def fit_loglog(x, y):
    """Least-squares slope, intercept and R^2 of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    slope, icpt = np.polyfit(lx, ly, 1)
    pred = slope * lx + icpt
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum((ly - pred) ** 2) / ss if ss > 0 else 1.0
    return float(slope), float(icpt), float(r2)


def export_table_csv(path, table: np.ndarray, nodes: np.ndarray, full: bool = False) -> None:
    """Write ``k, j, gap, frobenius`` rows for ``j <= k`` (plus flattened entries if ``full``)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        n = table.shape[-1]
        head = ["k", "j", "gap", "frobenius"]
        if full:
            head += [f"m{a}_{b}" for a in range(n) for b in range(n)]
        w.writerow(head)
        norms = block_norms(table)
        for k in range(len(nodes)):
            for j in range(k + 1):
                row = [k, j, repr(float(nodes[k] - nodes[j])), repr(float(norms[k, j]))]
                if full:
                    row += [repr(float(x)) for x in table[k, j].ravel()]
                w.writerow(row)
