"""Mild solutions: linear representation, Picard iteration, continuation.

The discrete mild map on a time grid is

    F(w)_k = S(t_k, 0) u0 + sum_i forcing[k, i] J(w_i),

with the forcing weights of :class:`~fracevol.volterra.SolutionOperatorTable`.
The linear solver and the Picard iteration share this map, so a zero
nonlinearity reproduces the linear solution bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import special

from .errors import (DomainError, NonContractionError, PreconditionError, VolterraConvergenceError,
                     WindowTooLongError)
from .generator import GeneratorFamily, SpatialGrid, lp_norm
from .subordination import SubordinationQuadrature
from .volterra import SolutionOperatorTable, TimeGrid, build_operators

BLOWUP_CEILING = 1e6
WINDOW_FLOOR_FRACTION = 1.0 / 1024


# ------------------------------------------------------ parameter calculus

class LocalParams(NamedTuple):
    a: float
    b: float
    p_threshold: float
    valid: bool


def local_params(alpha: float, lambda_A: float, p: float) -> LocalParams:
    """Growth exponents for the power nonlinearity.

    ``a = 1 - alpha + (alpha lambda_A / 2)(1 - 1/p)``,
    ``b = alpha/(p-1) - alpha lambda_A/(2p)`` and the threshold
    ``p > 1 + 2 alpha / (2(1-alpha) + alpha lambda_A)``.
    """
    if not p > 1:
        raise DomainError(f"p must exceed 1, got {p}")
    a = 1.0 - alpha + 0.5 * alpha * lambda_A * (1.0 - 1.0 / p)
    b = alpha / (p - 1.0) - alpha * lambda_A / (2.0 * p)
    thr = 1.0 + 2.0 * alpha / (2.0 * (1.0 - alpha) + alpha * lambda_A)
    return LocalParams(a, b, thr, bool(b > 0 and p > thr and b < a))


def global_params(alpha: float, lambda_A: float, p: float, b: float) -> float:
    """``q = 2 alpha lambda_A p / (alpha lambda_A + 2 p b)``; always ``q < 2p``."""
    if not b > 0:
        raise DomainError(f"b must be positive, got {b}")
    q = 2.0 * alpha * lambda_A * p / (alpha * lambda_A + 2.0 * p * b)
    assert q < 2 * p
    return q


def b_for_q(alpha: float, lambda_A: float, p: float, q: float) -> float:
    """Inverse of :func:`global_params`: ``b = alpha lambda_A (1/q - 1/(2p))``."""
    return alpha * lambda_A * (1.0 / q - 1.0 / (2.0 * p))


@dataclass
class FracParams:
    alpha: float
    lambda_A: float
    p: float
    theta: float
    a: float
    b: float
    kappa: float
    q_global: float

    def __post_init__(self):
        if not 0 < self.b < self.a:
            raise DomainError(f"need 0 < b < a, got a={self.a}, b={self.b}")
        if not self.kappa > 0:
            raise DomainError("kappa must be positive")

    @classmethod
    def build(cls, alpha: float, lambda_A: float, p: float, *, b: float | None = None,
              kappa: float = 1.0, theta: float = 1.0) -> "FracParams":
        lp = local_params(alpha, lambda_A, p)
        b = lp.b if b is None else b
        return cls(alpha, lambda_A, p, theta, lp.a, b, kappa, global_params(alpha, lambda_A, p, b))


# ------------------------------------------------------------ nonlinearity

@dataclass
class SemilinearSpec:
    """Pointwise nonlinearity with its ``L^{2p} -> L^2`` Lipschitz envelope ``l(r)``."""

    J: Callable[[np.ndarray], np.ndarray]
    p_power: float
    lipschitz_envelope: Callable[[float], float]
    envelope_const: float

    def __post_init__(self):
        z = np.asarray(self.J(np.zeros(3)), dtype=float)
        if np.any(z != 0):
            raise DomainError("the nonlinearity must satisfy J(0) = 0")


def power_nonlinearity(p: float, scale: float = 1.0) -> SemilinearSpec:
    """``J(u) = scale |u|^(p-1) u``.

    Pointwise ``|J(u)-J(v)| <= p |scale| max(|u|,|v|)^(p-1) |u-v|``; Holder with
    exponents ``2p/(p-1)`` and ``2p`` plus ``||max(|u|,|v|)||_{2p} <= 2^(1/(2p)) r``
    give ``l(r) = p |scale| 2^((p-1)/(2p)) r^(p-1)``.
    """
    const = p * abs(scale) * 2.0 ** ((p - 1.0) / (2.0 * p))
    return SemilinearSpec(lambda u: scale * np.abs(u) ** (p - 1.0) * u, p,
                          lambda r: const * r ** (p - 1.0), const)


def zero_nonlinearity(p: float = 2.0) -> SemilinearSpec:
    return SemilinearSpec(lambda u: np.zeros_like(u), p, lambda r: 0.0, 0.0)


def linear_nonlinearity(c: float = 1.0, p: float = 2.0) -> SemilinearSpec:
    """``J(u) = c u``; globally Lipschitz, used for cross-checks."""
    return SemilinearSpec(lambda u: c * u, p, lambda r: abs(c), abs(c))


def sample_lipschitz(spec: SemilinearSpec, grid: SpatialGrid, r: float, n_pairs: int = 50,
                     seed: int = 0) -> float:
    """Max over random pairs in the ``L^{2p}`` ball of radius ``r`` of the ratio
    ``||J(u)-J(v)||_2 / (l(r) ||u-v||_{2p})``; at most 1 when the envelope is valid."""
    rng = np.random.default_rng(seed)
    q = 2.0 * spec.p_power
    worst = 0.0
    for _ in range(n_pairs):
        u, v = rng.normal(size=(2, grid.size))
        u *= r * rng.uniform() / max(lp_norm(u, grid, q), 1e-300)
        v *= r * rng.uniform() / max(lp_norm(v, grid, q), 1e-300)
        den = spec.lipschitz_envelope(r) * lp_norm(u - v, grid, q)
        if den > 0:
            worst = max(worst, lp_norm(spec.J(u) - spec.J(v), grid, 2) / den)
    return worst


# ---------------------------------------------------------------- solution

@dataclass
class MildSolution:
    nodes: np.ndarray
    values: np.ndarray              # (K+1, N)
    weighted_sup: float
    status: str                     # converged | blowup | maxed
    iterations: int = 0
    distances: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    residual: float = 0.0
    b: float = 0.0
    p: float = 2.0
    kappa: float = math.inf
    windows: list = field(default_factory=list)
    weighted_trace: list = field(default_factory=list)
    message: str = ""


def _weights_tb(nodes: np.ndarray, b: float) -> np.ndarray:
    # t^b with the value at t = 0 taken as the limit 0 (b > 0)
    return np.where(nodes > 0, np.abs(nodes) ** b, 0.0)


def weighted_norms(values: np.ndarray, nodes: np.ndarray, grid: SpatialGrid, p: float, b: float) -> np.ndarray:
    tb = _weights_tb(nodes, b)
    return np.array([tb[k] * lp_norm(values[k], grid, 2 * p) for k in range(len(nodes))])


def distance(u: np.ndarray, v: np.ndarray, nodes: np.ndarray, grid: SpatialGrid, p: float, b: float) -> float:
    """``max(max_k ||u_k - v_k||_2, max_k t_k^b ||u_k - v_k||_{2p})``."""
    d = u - v
    l2 = max(lp_norm(d[k], grid, 2) for k in range(len(nodes)))
    return max(l2, float(np.max(weighted_norms(d, nodes, grid, p, b))))


def linear_part(ops: SolutionOperatorTable, u0) -> np.ndarray:
    return np.einsum("kab,b->ka", ops.S[:, 0], np.asarray(u0, dtype=float))


def mild_map(ops: SolutionOperatorTable, u0, g: np.ndarray, lin: np.ndarray | None = None) -> np.ndarray:
    """``S(t_k,0) u0 + sum_i forcing[k,i] g_i`` for forcing samples ``g`` of shape ``(K+1, N)``."""
    lin = linear_part(ops, u0) if lin is None else lin
    return lin + np.einsum("kiab,ib->ka", ops.forcing, g)


def solve_linear(family: GeneratorFamily, ops: SolutionOperatorTable, f, u0, tg: TimeGrid) -> MildSolution:
    """Representation formula with forcing ``f(t) -> vector`` (``None`` for zero)."""
    t = tg.nodes
    if len(t) != len(ops.nodes) or not np.allclose(t, ops.nodes):
        raise DomainError("time grid does not match the operator table")
    N = family.size
    g = np.zeros((len(t), N)) if f is None else np.stack([np.asarray(f(tk), dtype=float).reshape(N) for tk in t])
    vals = mild_map(ops, u0, g)
    return MildSolution(t, vals, float("nan"), "converged", 1)


def picard_semilinear(family: GeneratorFamily, ops: SolutionOperatorTable, spec: SemilinearSpec, u0,
                      params: FracParams, tg: TimeGrid, tol: float = 1e-8, max_iter: int = 200,
                      fixed_prefix: int = 0, history: np.ndarray | None = None) -> MildSolution:
    """Fixed point of the mild map in the weighted metric.

    ``fixed_prefix`` nodes (with values from ``history``) are held fixed and
    only later nodes iterate; this is how a converged solution is continued
    without discarding the memory term.
    """
    t = tg.nodes
    grid = family.grid
    p, b, kappa = params.p, params.b, params.kappa
    lin = linear_part(ops, u0)
    pre = weighted_norms(lin, t, grid, p, b)
    if fixed_prefix == 0 and float(pre.max()) >= kappa:
        raise PreconditionError(
            f"t^b ||S(t,0) u0||_(2p) reaches {pre.max():.4e} >= kappa = {kappa:.4e}", float(pre.max()))
    w = lin.copy()
    if fixed_prefix:
        w[:fixed_prefix] = history[:fixed_prefix]
    dists, ratios = [], []
    bad = 0
    for it in range(1, max_iter + 1):
        wn = mild_map(ops, u0, spec.J(w), lin)
        if fixed_prefix:
            wn[:fixed_prefix] = history[:fixed_prefix]
        if not np.all(np.isfinite(wn)):
            raise WindowTooLongError("iterate overflowed", math.inf)
        ws = float(np.max(weighted_norms(wn, t, grid, p, b)))
        if ws >= 2 * kappa:
            raise WindowTooLongError(f"weighted sup {ws:.4e} reached 2 kappa = {2 * kappa:.4e}", ws)
        d = distance(wn, w, t, grid, p, b)
        if dists:
            ratio = d / dists[-1] if dists[-1] > 0 else 0.0
            ratios.append(ratio)
            bad = bad + 1 if ratio >= 1 else 0
            if bad >= 3:
                raise NonContractionError("iterate distances grew for 3 consecutive steps", ratios)
        dists.append(d)
        w = wn
        if d < tol:
            break
    else:
        sol = MildSolution(t, w, ws, "maxed", max_iter, dists, ratios, b=b, p=p, kappa=kappa)
        sol.residual = mild_residual(ops, spec, u0, sol, grid)
        return sol
    sol = MildSolution(t, w, float(np.max(weighted_norms(w, t, grid, p, b))), "converged", it,
                       dists, ratios, b=b, p=p, kappa=kappa)
    sol.weighted_trace = list(weighted_norms(w, t, grid, p, b))
    if fixed_prefix == 0 and len(pre) > 3 and not (pre[1] <= pre[2] <= pre[3]):
        sol.message = "weighted linear part is not increasing away from t=0 at the smallest nodes"
    sol.residual = mild_residual(ops, spec, u0, sol, grid)
    return sol


def mild_residual(ops: SolutionOperatorTable, spec: SemilinearSpec, u0, sol: MildSolution,
                  grid: SpatialGrid) -> float:
    """Distance between ``u`` and the mild map applied to ``u``."""
    return distance(mild_map(ops, u0, spec.J(sol.values)), sol.values, sol.nodes, grid, sol.p, sol.b)


# ------------------------------------------------------------ continuation

def continue_solution(state: MildSolution, family: GeneratorFamily, ops: SolutionOperatorTable | None,
                      spec: SemilinearSpec, u0, params: FracParams, extension: TimeGrid,
                      quad: SubordinationQuadrature,
                      tol: float = 1e-8, ceiling: float = BLOWUP_CEILING,
                      volterra_tol: float = 1e-8) -> MildSolution:
    """Extend a converged solution to the horizon of ``extension``.

    ``extension`` must start with the nodes of ``state``.  The history is kept
    and only new nodes iterate, so the memory integral keeps the whole past.
    ``ops`` may hold a prebuilt table on ``extension`` (used for the first
    attempt); otherwise tables are built on demand.  If the full extension fails (no contraction, weighted bound exceeded or
    ``L^{2p}`` norm above ``ceiling``) the step is halved and retried; once the
    step falls below ``WINDOW_FLOOR_FRACTION`` times the original horizon the
    result carries ``status="blowup"``.
    """
    if state.status != "converged":
        raise DomainError("can only continue a converged solution")
    old = state.nodes
    K_old = len(old) - 1
    ext_nodes = extension.nodes
    if not np.allclose(ext_nodes[:K_old + 1], old):
        raise DomainError("extension grid must start with the current nodes")
    floor = WINDOW_FLOOR_FRACTION * old[-1]
    target = ext_nodes[-1]
    K_new = len(ext_nodes) - 1 - K_old
    cur = state
    step = target - old[-1]
    while cur.nodes[-1] < target - 1e-14 * target:
        end = min(cur.nodes[-1] + step, target)
        k_here = max(2, int(round(K_new * (end - cur.nodes[-1]) / (target - old[-1]))))
        tg = TimeGrid(float(cur.nodes[-1]), len(cur.nodes) - 1, 1.0,
                      tuple(float(x) for x in cur.nodes)).extend(end, k_here)
        try:
            if ops is not None and len(ops.nodes) == tg.K + 1 and np.allclose(ops.nodes, tg.nodes):
                tab = ops
            else:
                _, _, tab = build_operators(family, tg, quad, volterra_tol)
            nxt = picard_semilinear(family, tab, spec, u0, params, tg, tol,
                                    fixed_prefix=len(cur.nodes), history=cur.values)
            norms = [lp_norm(v, family.grid, 2 * params.p) for v in nxt.values]
            if nxt.status != "converged" or max(norms) > ceiling:
                raise WindowTooLongError("extension did not converge below the ceiling", max(norms))
        except (NonContractionError, WindowTooLongError, VolterraConvergenceError) as exc:
            step *= 0.5
            if step < floor:
                out = MildSolution(cur.nodes, cur.values, cur.weighted_sup, "blowup", cur.iterations,
                                   cur.distances, cur.ratios, cur.residual, cur.b, cur.p, cur.kappa,
                                   cur.windows, cur.weighted_trace,
                                   f"window shrank below {floor:.3e} at t={cur.nodes[-1]:.4g}: {exc}")
                return out
            continue
        nxt.windows = cur.windows + [(float(cur.nodes[-1]), float(end))]
        cur = nxt
    return cur


def solve_windows(family: GeneratorFamily, spec: SemilinearSpec, u0, params: FracParams,
                  window: float, n_windows: int, K_window: int, quad: SubordinationQuadrature,
                  tol: float = 1e-8, ceiling: float = BLOWUP_CEILING, grading_r: float = 1.0) -> MildSolution:
    """First window by Picard (halving on failure), then ``n_windows - 1`` continuations."""
    if window * n_windows > family.T * (1 + 1e-12):
        raise DomainError(f"{n_windows} windows of length {window} exceed the family horizon {family.T}")
    T0 = window
    floor = WINDOW_FLOOR_FRACTION * window
    last: Exception | None = None
    while True:
        tg = TimeGrid(T0, K_window, grading_r)
        _, _, ops = build_operators(family, tg, quad)
        try:
            sol = picard_semilinear(family, ops, spec, u0, params, tg, tol)
            if sol.status == "converged" and max(lp_norm(v, family.grid, 2 * params.p) for v in sol.values) <= ceiling:
                break
        except (NonContractionError, WindowTooLongError) as exc:
            last = exc
        T0 *= 0.5
        if T0 < floor:
            t = np.array([0.0])
            return MildSolution(t, np.asarray(u0, float)[None, :], 0.0, "blowup", 0, b=params.b, p=params.p,
                                kappa=params.kappa, message=f"first window shrank below floor: {last}")
    sol.windows = [(0.0, T0)]
    for m in range(1, n_windows):
        end = sol.nodes[-1] + window
        ext = TimeGrid(float(sol.nodes[-1]), len(sol.nodes) - 1, 1.0,
                       tuple(float(x) for x in sol.nodes)).extend(end, K_window)
        sol = continue_solution(sol, family, None, spec, u0, params, ext, quad, tol, ceiling)
        if sol.status != "converged":
            break
    return sol


# -------------------------------------------------------- global smallness

@dataclass
class SmallnessReport:
    a: float
    b: float
    q: float
    B: float
    epsilon: float
    lhs: float
    passes: bool
    C_S: float
    C_P: float
    Lambda: float


def beta_B(a: float, b: float) -> float:
    """``int_0^1 (1-tau)^(-a) tau^(a-1-b) d tau = Gamma(1-a) Gamma(a-b) / Gamma(1-b)``."""
    if not (a < 1 and b < a):
        raise DomainError(f"the Beta integral diverges unless a < 1 and b < a (a={a}, b={b})")
    return math.exp(special.gammaln(1 - a) + special.gammaln(a - b) - special.gammaln(1 - b))


def global_smallness_check(u0, grid: SpatialGrid, params: FracParams, C_S: float, C_P: float,
                           Lambda: float) -> SmallnessReport:
    """``2^((1-a+b)/b) Lambda B C_P eps^((1-a)/b) < 1`` with ``eps = C_S ||u0||_q``."""
    a, b, q = params.a, params.b, params.q_global
    B = beta_B(a, b)
    eps = C_S * lp_norm(u0, grid, q)
    lhs = 2.0 ** ((1 - a + b) / b) * Lambda * B * C_P * eps ** ((1 - a) / b) if eps > 0 else 0.0
    return SmallnessReport(a, b, q, B, eps, lhs, bool(lhs < 1), C_S, C_P, Lambda)
