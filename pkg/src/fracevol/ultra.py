"""Ultracontractivity: measured semigroup exponent and decay laws of S and P.

The semigroup ``T_t(tau) = exp(tau L(t))`` satisfies
``||T_t(tau)||_{p->q} ~ C tau^(-lambda_A (1/p - 1/q))`` for small ``tau``.
The solution operators inherit the exponent multiplied by ``alpha``:

    ||S_alpha(t, 0)||_{p->q}                       ~ C_S t^(-alpha lambda_A (1/p-1/q)),
    ||(t-tau)^(1-alpha) P_alpha(t, tau)||_{p->q}   ~ C_P (t-tau)^(-alpha lambda_A (1/p-1/q)).

On a bounded domain with a finite grid these are small-time laws: below
the grid scale the norms saturate, and beyond the first eigenvalue they
decay exponentially.  Fits therefore run over an explicit window.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SpectralError
from .generator import GeneratorFamily, operator_norm, operator_norm_bound, semigroup_matrix
from .volterra import SolutionOperatorTable, fit_loglog

MIN_R2 = 0.95


@dataclass
class PairFit:
    slope: float
    intercept: float
    r2: float
    expected: float
    n_points: int
    gaps: np.ndarray = field(repr=False)
    norms: np.ndarray = field(repr=False)

    @property
    def constant(self) -> float:
        return math.exp(self.intercept)

    @property
    def rel_error(self) -> float:
        if self.expected == 0:
            return abs(self.slope)
        return abs(self.slope - self.expected) / abs(self.expected)


@dataclass
class UltraReport:
    pq_pairs: list
    measured_lambda_A: float
    slopes: dict
    slopes_P: dict
    C_S: dict
    C_P: dict
    fit_window: tuple
    fits: dict = field(default_factory=dict, repr=False)
    fits_P: dict = field(default_factory=dict, repr=False)
    skipped: list = field(default_factory=list)
    low_r2: list = field(default_factory=list)


def _smoothing(p: float, q: float) -> float:
    return (0.0 if math.isinf(p) else 1.0 / p) - (0.0 if math.isinf(q) else 1.0 / q)


def small_time_window(family: GeneratorFamily, t: float = 0.0) -> tuple[float, float]:
    """Semigroup times where the small-time power law is visible.

    Lower end ``10 h^2`` (well above the grid scale), upper end
    ``0.3 / |mu_1|`` (well before the slowest mode dominates), where
    ``mu_1`` is the eigenvalue of ``L(t)`` closest to zero.
    """
    h = family.grid.h
    ev = np.linalg.eigvals(family.matrix(t))
    mu1 = float(np.min(np.abs(ev.real)))
    if mu1 <= 0:
        raise SpectralError("generator has a zero eigenvalue; no decay window")
    lo = 10.0 * h * h
    hi = max(0.3 / mu1, 3.0 * lo)
    return lo, hi


def decay_window(family: GeneratorFamily, alpha: float, t: float = 0.0) -> tuple[float, float]:
    """Gap window for the fractional decay fits.

    The solution operators average the semigroup over times ``z gap^alpha``
    with ``z`` of order one, so the semigroup window ``[3 h^2, 0.1/|mu_1|]``
    maps to gaps ``[(3 h^2)^(1/alpha), (0.1/|mu_1|)^(1/alpha)]``.  The
    upper end is tighter than for the semigroup itself because the Wright
    average reaches ``z`` well above one.  The window is empty on coarse
    grids (``3 h^2 >= 0.1/|mu_1|``), which raises ``DomainError``.
    """
    h = family.grid.h
    ev = np.linalg.eigvals(family.matrix(t))
    mu1 = float(np.min(np.abs(ev.real)))
    if mu1 <= 0:
        raise SpectralError("generator has a zero eigenvalue; no decay window")
    if 3.0 * h * h >= 0.1 / mu1:
        raise DomainError(f"decay window is empty at grid step h={h:.4g}; refine the spatial grid")
    return (3.0 * h * h) ** (1.0 / alpha), (0.1 / mu1) ** (1.0 / alpha)


def semigroup_slope(family: GeneratorFamily, taus, p: float, q: float, t: float = 0.0):
    """Slope, intercept and R^2 of ``log ||exp(tau L(t))||_{p->q}`` against ``log tau``."""
    taus = np.asarray(taus, dtype=float)
    if np.any(taus <= 0):
        raise DomainError("taus must be positive")
    norms = np.array([operator_norm(semigroup_matrix(family, t, tau), family.grid, p, q) for tau in taus])
    return fit_loglog(taus, norms)


def measure_semigroup_lambda(family: GeneratorFamily, taus=None, p: float = 1, q: float = math.inf,
                             t: float = 0.0, min_r2: float = MIN_R2) -> float:
    """``lambda_A`` from the semigroup log-log slope divided by ``-(1/p - 1/q)``."""
    d = _smoothing(p, q)
    if d <= 0:
        raise DomainError("measuring lambda_A needs p < q")
    if taus is None:
        lo, hi = small_time_window(family, t)
        taus = np.geomspace(lo, hi, 12)
    slope, _, r2 = semigroup_slope(family, taus, p, q, t)
    if r2 < min_r2:
        raise SpectralError(f"semigroup fit R^2 = {r2:.3f} below {min_r2}")
    return -slope / d


def default_window(nodes: np.ndarray) -> tuple[float, float]:
    """Gaps in ``[4 * smallest step, T / 4]``."""
    return 4.0 * float(np.min(np.diff(nodes))), float(nodes[-1]) / 4.0


def _fit(gaps, norms, expected) -> PairFit:
    gaps, norms = np.asarray(gaps), np.asarray(norms)
    if len(gaps) < 3:
        raise DomainError("fewer than 3 points in the fit window")
    slope, icpt, r2 = fit_loglog(gaps, norms)
    return PairFit(slope, icpt, r2, expected, len(gaps), gaps, norms)


def _norms_parallel(mats, grid, p, q, workers):
    fn = lambda M: operator_norm_bound(M, grid, p, q)  # noqa: E731
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, mats))
    return [fn(M) for M in mats]


def _check_pairs(pairs, lam, limit):
    ok, skipped = [], []
    for p, q in pairs:
        if lam * _smoothing(p, q) < limit:
            ok.append((p, q))
        else:
            warnings.warn(f"pair ({p}, {q}) skipped: lambda_A (1/p - 1/q) >= {limit}", stacklevel=3)
            skipped.append((p, q))
    return ok, skipped


def verify_S_decay(family: GeneratorFamily, ops: SolutionOperatorTable, pq_pairs, window=None,
                   lambda_A: float | None = None, workers: int = 0) -> UltraReport:
    """Fit ``log ||S(t_k, 0)||_{p->q}`` against ``log t_k`` over ``window``."""
    lam = measure_semigroup_lambda(family) if lambda_A is None else lambda_A
    t = ops.nodes
    lo, hi = default_window(t) if window is None else window
    sel = [k for k in range(1, len(t)) if lo <= t[k] <= hi]
    pairs, skipped = _check_pairs(pq_pairs, lam, 1.0)
    rep = UltraReport(list(pq_pairs), lam, {}, {}, {}, {}, (lo, hi), skipped=skipped)
    for p, q in pairs:
        norms = _norms_parallel([ops.S[k, 0] for k in sel], family.grid, p, q, workers)
        f = _fit(t[sel], norms, -ops.alpha * lam * _smoothing(p, q))
        rep.fits[(p, q)] = f
        rep.slopes[(p, q)] = f.slope
        rep.C_S[(p, q)] = f.constant
        if f.r2 < MIN_R2:
            rep.low_r2.append(("S", p, q, f.r2))
    return rep


def _pairs_in_window(nodes, lo, hi, column0: bool):
    out = []
    for k in range(1, len(nodes)):
        for j in ([0] if column0 else range(k)):
            g = nodes[k] - nodes[j]
            if lo <= g <= hi:
                out.append((k, j, g))
    return out


def verify_P_decay(family: GeneratorFamily, ops: SolutionOperatorTable, pq_pairs, window=None,
                   lambda_A: float | None = None, workers: int = 0, column0: bool = False) -> UltraReport:
    """Fit ``log ||(t_k - t_j)^(1-alpha) P(t_k, t_j)||_{p->q}`` against the gap.

    All pairs ``j < k`` with gap in ``window`` enter the fit (only ``j = 0``
    when ``column0``).
    """
    lam = measure_semigroup_lambda(family) if lambda_A is None else lambda_A
    t = ops.nodes
    lo, hi = default_window(t) if window is None else window
    kjg = _pairs_in_window(t, lo, hi, column0)
    pairs, skipped = _check_pairs(pq_pairs, lam, 2.0)
    rep = UltraReport(list(pq_pairs), lam, {}, {}, {}, {}, (lo, hi), skipped=skipped)
    gaps = np.array([g for _, _, g in kjg])
    for p, q in pairs:
        norms = _norms_parallel([ops.P_weighted[k, j] for k, j, _ in kjg], family.grid, p, q, workers)
        f = _fit(gaps, norms, -ops.alpha * lam * _smoothing(p, q))
        rep.fits_P[(p, q)] = f
        rep.slopes_P[(p, q)] = f.slope
        rep.C_P[(p, q)] = f.constant
        if f.r2 < MIN_R2:
            rep.low_r2.append(("P", p, q, f.r2))
    return rep


def sup_constants(family: GeneratorFamily, ops: SolutionOperatorTable, q: float, p2: float,
                  b: float, a: float) -> tuple[float, float]:
    """Grid suprema used by the global smallness check.

    ``C_S = max_k t_k^b ||S(t_k, 0)||_{q->p2}`` and
    ``C_P = max_{j<k} (t_k-t_j)^(a-(1-alpha)) ||(t_k-t_j)^(1-alpha) P(t_k,t_j)||_{2->p2}``,
    with Riesz-Thorin bounds where no exact norm exists.  These are the
    smallest constants for which the decay bounds hold on the grid.
    """
    t = ops.nodes
    grid = family.grid
    C_S = max(t[k] ** b * operator_norm_bound(ops.S[k, 0], grid, q, p2) for k in range(1, len(t)))
    e = a - (1.0 - ops.alpha)
    C_P = max((t[k] - t[j]) ** e * operator_norm_bound(ops.P_weighted[k, j], grid, 2, p2)
              for k in range(1, len(t)) for j in range(k))
    return float(C_S), float(C_P)
