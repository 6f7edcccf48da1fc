"""Independent validators: the L1 Caputo time stepper and autonomous closed forms.

Nothing here touches the subordination or Volterra machinery; only the
special functions and the generator assembly are shared with the main
solver, so agreement between the two is a genuine cross-check.

On a grid ``t_0 < ... < t_K`` the L1 scheme approximates

    d^alpha u(t_k) ~ sum_{j<k} a_{k,j} (u_{j+1} - u_j),
    a_{k,j} = [(t_k - t_j)^(1-alpha) - (t_k - t_{j+1})^(1-alpha)] / (Gamma(2-alpha) (t_{j+1} - t_j)),

which is exact for piecewise-linear ``u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg as sla

from .errors import DomainError, FracEvolError
from .generator import GeneratorFamily
from .specfun import check_alpha, mittag_leffler


@dataclass
class L1Weights:
    alpha: float
    nodes: np.ndarray
    a: np.ndarray          # (K+1, K); row k uses columns j < k

    def derivative(self, values) -> np.ndarray:
        """Discrete Caputo derivative at nodes ``1..K`` of samples with leading time axis."""
        u = np.asarray(values, dtype=float)
        du = np.diff(u, axis=0)
        return np.tensordot(self.a[1:], du, axes=(1, 0))


def l1_weights(alpha: float, nodes) -> L1Weights:
    """L1 coefficients on an arbitrary strictly increasing grid."""
    alpha = check_alpha(alpha)
    t = np.asarray(getattr(nodes, "nodes", nodes), dtype=float)
    if t.ndim != 1 or len(t) < 2 or not np.all(np.diff(t) > 0):
        raise DomainError("L1 weights need a strictly increasing grid")
    K = len(t) - 1
    g = math.gamma(2.0 - alpha)
    a = np.zeros((K + 1, K))
    h = np.diff(t)
    for k in range(1, K + 1):
        d = t[k] - t[: k + 1]                      # distances t_k - t_j, j = 0..k
        e = d ** (1.0 - alpha)
        a[k, :k] = (e[:-1] - e[1:]) / (g * h[:k])
    return L1Weights(alpha, t, a)


@dataclass
class OracleSolution:
    nodes: np.ndarray
    values: np.ndarray
    status: str = "converged"
    method: str = "L1 semi-implicit"
    info: dict = field(default_factory=dict)


class LinearSolveError(FracEvolError):
    exit_code = 4


def l1_solve(family: GeneratorFamily, spec_or_f, u0, tg, *, f: Callable | None = None,
             alpha: float | None = None, corrections: int = 0) -> OracleSolution:
    """March ``d^alpha u = L(t) u + f(t) + J(u)`` with the L1 scheme.

    ``spec_or_f`` is either an object with a pointwise ``J`` attribute (the
    nonlinearity), a callable forcing ``f(t)``, or ``None``.  A separate
    forcing may also be passed as ``f``.  ``alpha`` defaults to ``tg.alpha``
    when present; pass it explicitly otherwise.

    The linear part is implicit and ``J`` is lagged by one step (first order
    in the step).  ``corrections > 0`` adds up to that many fixed-point
    sweeps per step with ``J`` evaluated at the new value, reusing the same
    factorization and stopping once a sweep changes the value by less than
    ``1e-13`` relative.
    """
    if alpha is None:
        alpha = getattr(tg, "alpha", None)
        if alpha is None:
            raise DomainError("l1_solve needs alpha")
    J = getattr(spec_or_f, "J", None)
    if J is None and callable(spec_or_f):
        f = spec_or_f
    W = l1_weights(alpha, tg)
    t = W.nodes
    K = len(t) - 1
    N = family.size
    u = np.zeros((K + 1, N))
    u[0] = np.asarray(u0, dtype=float).reshape(N)
    eye = np.eye(N)
    for k in range(1, K + 1):
        a = W.a[k]
        rhs = a[k - 1] * u[k - 1]
        if k > 1:
            rhs -= a[: k - 1] @ np.diff(u[:k], axis=0)
        if f is not None:
            rhs = rhs + np.asarray(f(t[k]), dtype=float).reshape(N)
        try:
            lu = sla.lu_factor(a[k - 1] * eye - family.matrix(t[k]))
        except (sla.LinAlgError, ValueError) as exc:
            raise LinearSolveError(f"L1 step {k} failed: {exc}") from exc
        nxt = u[k - 1]
        for sweep in range(1 + (corrections if J is not None else 0)):
            with np.errstate(over="ignore", invalid="ignore"):
                b = rhs + J(nxt) if J is not None else rhs
            if not np.all(np.isfinite(b)):
                return OracleSolution(t[:k], u[:k], "blowup")
            prev, nxt = nxt, sla.lu_solve(lu, b)
            if sweep and np.max(np.abs(nxt - prev)) <= 1e-13 * max(np.max(np.abs(nxt)), 1e-300):
                break
        u[k] = nxt
        if not np.all(np.isfinite(u[k])):
            return OracleSolution(t[: k + 1], u[: k + 1], "blowup")
    return OracleSolution(t, u)


def autonomous_closed_form(lam: float, alpha: float, t: float, u0):
    """``E_alpha(-lam t^alpha) u0`` for a scalar (or diagonal) autonomous problem."""
    if lam < 0:
        raise DomainError("closed form requires lambda >= 0")
    if t < 0:
        raise DomainError("closed form requires t >= 0")
    if t == 0 or lam == 0:
        return 1.0 * np.asarray(u0) if np.ndim(u0) else float(u0)
    return mittag_leffler(check_alpha(alpha), 1.0, -lam * t ** alpha) * (np.asarray(u0) if np.ndim(u0) else u0)


def observed_orders(errors) -> np.ndarray:
    """``log2`` ratios of successive errors under grid halving."""
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])
