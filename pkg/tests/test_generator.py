from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracevol.errors import DomainError, EllipticityError
from fracevol.generator import (PRESETS, CoefficientSet, GeneratorFamily, SpatialGrid, assemble, build_family,
                                check_at_conditions, fractional_power_apply, lp_norm, negative_power_apply,
                                negative_power_quadrature, operator_norm, operator_norm_bound, scalar_family,
                                semigroup_apply, semigroup_matrix)


def _unit_a(t, X):
    return np.ones((X.shape[0], 1, 1))


def _family_1d(n=3, c=None):
    return GeneratorFamily(SpatialGrid(1, n), CoefficientSet(a=_unit_a, c=c, autonomous=True))


def test_grid_invariants():
    for dim, n in ((1, 7), (2, 5)):
        g = SpatialGrid(dim, n)
        assert g.h == 1 / (n + 1)
        assert np.all(g.weights > 0)
        assert g.weights.sum() <= 1
        assert g.points.shape == (g.size, dim)
        assert np.all((g.points > 0) & (g.points < 1))
    with pytest.raises(DomainError):
        SpatialGrid(3, 4)


def test_assemble_stencil_example():
    L = assemble(_family_1d(), 0.0)
    expected = np.array([[-32.0, 16, 0], [16, -32, 16], [0, 16, -32]])
    np.testing.assert_allclose(L, expected, rtol=0, atol=1e-12)
    Lc = assemble(_family_1d(c=lambda t, X: -np.ones(X.shape[0])), 0.0)
    np.testing.assert_allclose(Lc, expected - np.eye(3), atol=1e-12)


def test_autonomous_time_independence():
    for name in ("laplace-1d", "laplace-2d"):
        fam = build_family(name, 5, 1.0)
        np.testing.assert_array_equal(assemble(fam, 0.1), assemble(fam, 0.9))


def test_presets_spectrum_left_half_plane():
    for name in PRESETS:
        fam = build_family(name, 5, 1.0)
        for t in (0.0, 0.5, 1.0):
            ev = np.linalg.eigvals(fam.matrix(t))
            assert np.max(ev.real) < 0, name


def test_ellipticity_violation_raises():
    bad = CoefficientSet(a=lambda t, X: -np.ones((X.shape[0], 1, 1)))
    fam = GeneratorFamily(SpatialGrid(1, 4), bad)
    with pytest.raises(EllipticityError):
        fam.matrix(0.0)


def test_time_outside_horizon():
    with pytest.raises(DomainError):
        build_family("laplace-1d", 5, 1.0).matrix(1.5)


def test_semigroup_examples():
    fam = _family_1d()
    v = np.array([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(semigroup_apply(fam, 0.0, 0.0, v), v)
    sc = scalar_family(2.0)
    assert semigroup_apply(sc, 0.0, 0.3, [1.5])[0] == pytest.approx(1.5 * math.exp(-0.6), rel=1e-14)
    h = 0.25
    for k in (1, 2, 3):
        vec = np.sin(k * math.pi * h * np.arange(1, 4))
        mu = -(2 / h ** 2) * (1 - math.cos(k * math.pi * h))
        np.testing.assert_allclose(semigroup_apply(fam, 0.0, 0.01, vec), math.exp(0.01 * mu) * vec, atol=1e-13)


@given(st.sampled_from(sorted(PRESETS)), st.floats(1e-4, 0.05), st.floats(1e-4, 0.05), st.floats(0.0, 1.0))
def test_semigroup_law(name, t1, t2, t):
    fam = build_family(name, 5, 1.0)
    v = np.linspace(-1, 1, fam.size)
    lhs = semigroup_apply(fam, t, t1 + t2, v)
    rhs = semigroup_apply(fam, t, t1, semigroup_apply(fam, t, t2, v))
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


@given(st.sampled_from(sorted(PRESETS)), st.floats(1e-4, 1.0), st.floats(0.0, 1.0))
def test_semigroup_contractive(name, tau, t):
    fam = build_family(name, 5, 1.0)
    if not np.all(np.linalg.eigvalsh(0.5 * (fam.matrix(t) + fam.matrix(t).T)) < 0):
        return  # contractivity is claimed only for presets with negative symmetric part
    assert operator_norm(semigroup_matrix(fam, t, tau), fam.grid, 2, 2) <= 1 + 1e-12


def test_raw_ultracontractivity_slope():
    for name, n, dim in (("laplace-1d", 63, 1), ("laplace-2d", 31, 2)):
        fam = build_family(name, n, 1.0)
        h = fam.grid.h
        mu1 = dim * math.pi ** 2
        taus = np.geomspace(10 * h * h, 0.3 / mu1 if dim == 1 else 0.6 / mu1, 8)
        norms = [operator_norm(semigroup_matrix(fam, 0.0, tau), fam.grid, 1, math.inf) for tau in taus]
        slope = np.polyfit(np.log(taus), np.log(norms), 1)[0]
        assert slope == pytest.approx(-dim / 2, rel=0.1)


def test_fractional_power_examples():
    sc = scalar_family(4.0)
    assert fractional_power_apply(sc, 0.0, 0.5, [1.0])[0] == pytest.approx(2.0, rel=1e-14)
    fam = _family_1d()
    v = np.array([0.3, -1.0, 2.0])
    twice = fractional_power_apply(fam, 0.0, 0.5, fractional_power_apply(fam, 0.0, 0.5, v))
    np.testing.assert_allclose(twice, -fam.matrix(0.0) @ v, rtol=1e-12)
    with pytest.raises(DomainError):
        fractional_power_apply(fam, 0.0, 1.0, v)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_fractional_power_quadrature_consistency(name):
    fam = build_family(name, 3, 1.0)
    v = np.linspace(0.5, 1.5, fam.size)
    for nu in (0.25, 0.5):
        spec = negative_power_apply(fam, 0.7, nu, v)
        quad = negative_power_quadrature(fam, 0.7, nu, v)
        assert np.max(np.abs(spec - quad)) <= 1e-6 * np.max(np.abs(spec))


def test_lp_norm_examples():
    g = SpatialGrid(1, 9)
    assert lp_norm(np.zeros(9), g, 3) == 0.0
    m = g.weights.sum()
    for p in (1, 2, 3.5):
        assert lp_norm(np.ones(9), g, p) == pytest.approx(m ** (1 / p), rel=1e-14)
    v = np.linspace(-1, 2, 9)
    assert lp_norm(v, g, 2) ** 2 == pytest.approx(np.sum(g.weights * v * v), rel=1e-14)
    assert lp_norm(v, g, math.inf) == 2.0


def test_operator_norm_examples():
    g = SpatialGrid(1, 5)
    I = np.eye(5)
    assert operator_norm(I, g, 2, 2) == pytest.approx(1.0)
    assert operator_norm(I, g, 1, math.inf) == pytest.approx(1 / g.h)
    E = np.zeros((5, 5))
    E[0, 0] = 1
    assert operator_norm(E, g, 2, 2) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        operator_norm(I, g, 3, 4)


@given(st.integers(0, 10_000), st.sampled_from([(1, 2), (2, math.inf), (1, math.inf), (2, 2), (1, 1)]))
def test_operator_norm_is_attained_bound(seed, pq):
    """No random vector beats the exact norm, and the norm is nearly attained."""
    rng = np.random.default_rng(seed)
    g = SpatialGrid(1, 6)
    M = rng.normal(size=(6, 6))
    p, q = pq
    nrm = operator_norm(M, g, p, q)
    for _ in range(20):
        v = rng.normal(size=6)
        assert lp_norm(M @ v, g, q) <= nrm * lp_norm(v, g, p) * (1 + 1e-12)


@given(st.integers(0, 10_000))
def test_duality(seed):
    rng = np.random.default_rng(seed)
    g = SpatialGrid(1, 6)
    M = rng.normal(size=(6, 6))
    adj = M.T  # uniform weights: the sigma-adjoint is the transpose
    assert operator_norm(M, g, 1, 1) == pytest.approx(operator_norm(adj, g, math.inf, math.inf), rel=1e-12)


def test_norm_bound_dominates_samples():
    rng = np.random.default_rng(3)
    g = SpatialGrid(1, 6)
    M = np.abs(rng.normal(size=(6, 6)))
    bound = operator_norm_bound(M, g, 2, 4)
    for _ in range(200):
        v = rng.normal(size=6)
        assert lp_norm(M @ v, g, 4) <= bound * lp_norm(v, g, 2) * (1 + 1e-12)


def test_at_conditions():
    rep = check_at_conditions(build_family("laplace-1d", 7, 1.0), [0.0, 0.5, 1.0])
    assert rep.L_est == 0.0 and rep.M_est >= 0 and math.isfinite(rep.M_est)
    fam = build_family("lipschitz-1d", 7, 1.0)
    rep = check_at_conditions(fam, [0.5] + [0.5 + 0.5 * 2.0 ** -k for k in range(1, 7)])
    assert 0.9 <= rep.theta_fit <= 1.0 + 1e-6
    rep = check_at_conditions(build_family("holder-1d", 7, 1.0), [0.5] + [0.5 + 0.5 * 2.0 ** -k for k in range(1, 7)])
    assert rep.theta_fit == pytest.approx(0.5, abs=0.05)
    lam0 = 3.0
    rep = check_at_conditions(scalar_family(lam0), [0.0])
    ref = max((1 + abs(l)) / abs(l - lam0) for l in (-(10.0 ** k) for k in range(-2, 4)))
    assert rep.M_est == pytest.approx(ref, rel=1e-12)


def test_concurrent_assembly_is_idempotent():
    fam = build_family("timevarying-1d", 9, 1.0)
    ts = [0.1 * k for k in range(10)] * 4
    with ThreadPoolExecutor(4) as ex:
        mats = list(ex.map(fam.matrix, ts))
    for t, M in zip(ts, mats):
        assert M is fam.matrix(t)
