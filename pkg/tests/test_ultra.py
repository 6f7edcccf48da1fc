from __future__ import annotations

import math

import numpy as np
import pytest

from fracevol.errors import DomainError, SpectralError
from fracevol.generator import build_family, operator_norm, scalar_family
from fracevol.specfun import mittag_leffler
from fracevol.ultra import (MIN_R2, decay_window, default_window, measure_semigroup_lambda, semigroup_slope,
                            small_time_window, sup_constants, verify_P_decay, verify_S_decay)
from fracevol.volterra import TimeGrid, build_operators

from conftest import laplace_decay_setup, quad_for

INF = math.inf
SMOOTHING = [(1, INF), (1, 2), (2, INF)]


def test_measured_lambda_1d_and_2d():
    assert measure_semigroup_lambda(build_family("laplace-1d", 63)) == pytest.approx(0.5, rel=0.1)
    assert measure_semigroup_lambda(build_family("laplace-2d", 31)) == pytest.approx(1.0, rel=0.1)
    with pytest.raises(DomainError):
        measure_semigroup_lambda(build_family("laplace-1d", 15), p=2, q=2)


def test_equal_exponents_have_flat_semigroup():
    """Without smoothing the (2,2) norm is exp(-mu_1 tau): no power law, slope -> 0 as tau -> 0."""
    fam = build_family("laplace-1d", 31)
    mu1 = float(np.min(np.abs(np.linalg.eigvalsh(fam.matrix(0.0)))))
    taus = np.geomspace(1e-4, 1e-2, 8) / mu1
    slope, _, _ = semigroup_slope(fam, taus, 2, 2)
    assert abs(slope) < 0.01
    from fracevol.generator import semigroup_matrix
    norms = [operator_norm(semigroup_matrix(fam, 0.0, tau), fam.grid, 2, 2) for tau in taus]
    np.testing.assert_allclose(norms, np.exp(-mu1 * taus), rtol=1e-10)


def test_windows():
    fam = build_family("laplace-1d", 31)
    lo, hi = small_time_window(fam)
    assert lo == pytest.approx(10 / 32 ** 2) and hi > lo
    dlo, dhi = decay_window(fam, 0.5)
    assert dlo == pytest.approx((3 / 32 ** 2) ** 2) and dhi > dlo
    with pytest.raises(DomainError, match="empty"):
        decay_window(build_family("laplace-1d", 15), 0.5)
    assert default_window(np.array([0.0, 0.1, 0.3, 1.0])) == pytest.approx((0.4, 0.25))
    zero = scalar_family(0.0)
    with pytest.raises(SpectralError):
        small_time_window(zero)


def test_S_decay_laws():
    fam, ops, win, lam = laplace_decay_setup()
    rep = verify_S_decay(fam, ops, SMOOTHING + [(2, 2)], win, lam)
    assert rep.measured_lambda_A == lam and rep.fit_window == win
    for pq in SMOOTHING:
        f = rep.fits[pq]
        assert f.slope < 0 and f.r2 >= MIN_R2
        assert f.rel_error < 0.1
        assert rep.C_S[pq] == pytest.approx(f.constant)
    assert abs(rep.slopes[(2, 2)]) < 0.05
    assert max(rep.fits[(2, 2)].norms) <= 1 + 1e-9


def test_P_decay_laws():
    fam, ops, win, lam = laplace_decay_setup()
    rep = verify_P_decay(fam, ops, SMOOTHING + [(2, 2)], win, lam)
    for pq in SMOOTHING:
        f = rep.fits_P[pq]
        assert f.slope < 0 and f.r2 >= MIN_R2
        assert f.rel_error < 0.1
    assert abs(rep.slopes_P[(2, 2)]) < 0.05
    assert max(rep.fits_P[(2, 2)].norms) <= 1 / math.gamma(0.5) + 1e-9


def test_exponent_product_law():
    """S slope over semigroup slope is alpha, pair by pair."""
    fam, ops, win, lam = laplace_decay_setup()
    rep = verify_S_decay(fam, ops, SMOOTHING, win, lam)
    taus = np.geomspace(*small_time_window(fam), 12)
    for p, q in SMOOTHING:
        semi = semigroup_slope(fam, taus, p, q)[0]
        assert rep.slopes[(p, q)] / semi == pytest.approx(0.5, rel=0.1)


def test_window_halving_is_stable():
    fam, ops, (lo, hi), lam = laplace_decay_setup()
    full = verify_S_decay(fam, ops, SMOOTHING, (lo, hi), lam)
    half = verify_S_decay(fam, ops, SMOOTHING, (lo, hi / 2), lam)
    fullP = verify_P_decay(fam, ops, SMOOTHING, (lo, hi), lam)
    halfP = verify_P_decay(fam, ops, SMOOTHING, (lo, hi / 2), lam)
    for pq in SMOOTHING:
        assert half.slopes[pq] == pytest.approx(full.slopes[pq], rel=0.05)
        assert halfP.slopes_P[pq] == pytest.approx(fullP.slopes_P[pq], rel=0.05)


def test_concurrent_norms_match_serial():
    fam, ops, win, lam = laplace_decay_setup()
    a = verify_P_decay(fam, ops, [(1, 2)], win, lam, workers=1)
    b = verify_P_decay(fam, ops, [(1, 2)], win, lam, workers=4)
    np.testing.assert_array_equal(a.fits_P[(1, 2)].norms, b.fits_P[(1, 2)].norms)


def test_hypothesis_violations_are_skipped():
    fam, ops, win, _ = laplace_decay_setup()
    with pytest.warns(UserWarning):
        rep = verify_S_decay(fam, ops, [(1, INF), (2, 2)], win, lambda_A=1.5)
    assert rep.skipped == [(1, INF)] and (1, INF) not in rep.slopes
    with pytest.warns(UserWarning):
        rep = verify_P_decay(fam, ops, [(1, INF)], win, lambda_A=2.5)
    assert rep.skipped == [(1, INF)]


@pytest.mark.parametrize("alpha", (0.3, 0.5, 0.7))
def test_scalar_operators(alpha):
    lam = 2.0
    fam = scalar_family(lam)
    tg = TimeGrid(1.0, 16, 2.0)
    _, _, ops = build_operators(fam, tg, quad_for(alpha))
    rep = verify_S_decay(fam, ops, [(2, 2)], (0.01, 1.0), lambda_A=0.5)
    for t, nrm in zip(rep.fits[(2, 2)].gaps, rep.fits[(2, 2)].norms):
        assert nrm == pytest.approx(mittag_leffler(alpha, 1.0, -lam * t ** alpha), rel=1e-9)
        assert nrm <= 1.0
    repP = verify_P_decay(fam, ops, [(2, 2)], (0.01, 1.0), lambda_A=0.5, column0=True)
    for g, nrm in zip(repP.fits_P[(2, 2)].gaps, repP.fits_P[(2, 2)].norms):
        assert nrm == pytest.approx(mittag_leffler(alpha, alpha, -lam * g ** alpha), rel=1e-9)
        assert nrm <= 1 / math.gamma(alpha)


def test_sup_constants_cover_the_grid():
    from fracevol.generator import operator_norm_bound
    fam, ops, _, _ = laplace_decay_setup()
    b, a = 0.1, 0.6
    C_S, C_P = sup_constants(fam, ops, 2.0, 4.0, b, a)
    t = ops.nodes
    S_terms = [t[k] ** b * operator_norm_bound(ops.S[k, 0], fam.grid, 2.0, 4.0) for k in range(1, len(t))]
    assert C_S == pytest.approx(max(S_terms), rel=1e-12)
    e = a - 0.5
    for k, j in ((5, 0), (30, 12), (48, 47)):
        g = t[k] - t[j]
        assert g ** e * operator_norm_bound(ops.P_weighted[k, j], fam.grid, 2, 4.0) <= C_P * (1 + 1e-12)
