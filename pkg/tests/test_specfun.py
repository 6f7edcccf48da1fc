from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from fracevol.errors import AccuracyCeilingError, DomainError
from fracevol.specfun import (SeriesAccuracy, beta_convolution, beta_convolution_quad, check_alpha, g_alpha,
                              gamma_fn, mittag_leffler, wright_density, wright_moment, wright_phi)
from reference import ml_laplace, ml_mp, ml_reference

ALPHAS = (0.3, 0.5, 0.7)


def test_check_alpha_rejects_endpoints():
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(DomainError):
            check_alpha(bad)


def test_series_accuracy_invariants():
    with pytest.raises(DomainError):
        SeriesAccuracy(abs_tol=1e-20)
    with pytest.raises(DomainError):
        SeriesAccuracy(max_terms=8)


def test_g_alpha_examples():
    assert g_alpha(0.5, 0.0) == 0.0
    assert g_alpha(0.5, -1.0) == 0.0
    assert g_alpha(0.5, 1.0) == pytest.approx(0.564189584, rel=1e-9)
    assert g_alpha(0.5, 4.0) == pytest.approx(0.282094792, rel=1e-9)


def test_gamma_examples():
    assert gamma_fn(1.0) == 1.0
    assert gamma_fn(5.0) == pytest.approx(24.0, rel=1e-13)
    assert gamma_fn(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-13)
    with pytest.raises(DomainError):
        gamma_fn(0.0)


def test_beta_convolution_examples():
    assert beta_convolution(1, 1, 0, 2) == pytest.approx(2.0, rel=1e-14)
    assert beta_convolution(0.5, 0.5, 0, 1) == pytest.approx(math.pi, rel=1e-13)
    assert beta_convolution(0.5, 1, 1, 2) == pytest.approx(2.0, rel=1e-13)
    with pytest.raises(DomainError):
        beta_convolution(0.5, 0.5, 1.0, 1.0)


@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(0.0, 2.0), st.floats(0.05, 3.0))
def test_beta_identity_property(a, b, tau, gap):
    closed = beta_convolution(a, b, tau, tau + gap)
    assert closed == pytest.approx(beta_convolution_quad(a, b, tau, tau + gap), rel=1e-8)


def test_wright_examples():
    assert wright_phi(0.5, 0.0) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-12)
    assert wright_phi(0.5, 2.0) == pytest.approx(math.exp(-1) / math.sqrt(math.pi), rel=1e-10)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_wright_nonnegative(alpha):
    acc = SeriesAccuracy()
    for z in np.linspace(0.0, 20.0, 81):
        assert wright_phi(alpha, float(z)) >= -acc.abs_tol


def test_wright_half_closed_form():
    for z in np.linspace(0.0, 5.0, 26):
        ref = math.exp(-z * z / 4) / math.sqrt(math.pi)
        assert wright_phi(0.5, float(z)) == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_wright_mass_and_moments(alpha):
    zmax = wright_density(alpha).z_max
    f = lambda z: wright_phi(alpha, z)  # noqa: E731
    mass, _ = integrate.quad(f, 0, zmax, epsabs=1e-13, epsrel=1e-12, limit=200)
    assert abs(mass - 1.0) < 1e-8
    for delta in (0.5, 1.0, 2.0, 3.0):
        m, _ = integrate.quad(lambda z: z ** delta * f(z), 0, zmax, epsabs=1e-14, epsrel=1e-12, limit=200)
        assert m == pytest.approx(wright_moment(alpha, delta), rel=1e-7)


def test_wright_moment_examples():
    assert wright_moment(0.3, 0.0) == 1.0
    assert wright_moment(0.5, 1.0) == pytest.approx(2 / math.sqrt(math.pi), rel=1e-13)
    assert wright_moment(0.5, 2.0) == pytest.approx(2.0, rel=1e-13)
    assert wright_moment(0.5, 1.5, debug=True) == pytest.approx(math.gamma(2.5) / math.gamma(1.75), rel=1e-7)
    with pytest.raises(DomainError):
        wright_moment(0.5, -1.0)


def test_wright_density_matches_series():
    for a in ALPHAS:
        d = wright_density(a)
        for z in np.linspace(0, min(d.z_max, 8.0), 17):
            assert float(d(z)) == pytest.approx(wright_phi(a, float(z)), abs=1e-12)


def test_mittag_leffler_examples():
    assert mittag_leffler(1, 1, 1) == pytest.approx(math.e, rel=1e-12)
    assert abs(mittag_leffler(2, 1, -(math.pi / 2) ** 2)) <= 1e-10
    assert mittag_leffler(0.5, 1, -1) == pytest.approx(math.e * math.erfc(1), rel=1e-10)


def test_mittag_leffler_reductions():
    for x in np.linspace(0, 5, 21):
        assert mittag_leffler(1, 1, float(x)) == pytest.approx(math.exp(x), rel=1e-10)
        assert mittag_leffler(2, 1, float(-x * x)) == pytest.approx(math.cos(x), abs=1e-10)


def test_mittag_leffler_ceiling():
    with pytest.raises(AccuracyCeilingError):
        mittag_leffler(0.5, 1.0, -51.0)


@given(st.sampled_from(ALPHAS), st.sampled_from((1.0, 0.5, 0.3, 0.7, 1.5, 2.0)), st.floats(-50.0, 10.0))
def test_mittag_leffler_vs_extended_precision(alpha, beta, z):
    ref = ml_reference(alpha, beta, z)
    assert mittag_leffler(alpha, beta, z) == pytest.approx(ref, rel=1e-10, abs=1e-14)


def test_mittag_leffler_references_agree():
    for alpha, beta, z in ((0.3, 0.5, -4.0), (0.5, 1.0, -3.0), (0.7, 2.0, -10.0), (0.7, 0.7, -50.0)):
        assert ml_laplace(alpha, beta, z) == pytest.approx(ml_mp(alpha, beta, z, dps=int(40 + abs(z) ** (1 / alpha) / 2.3)), rel=1e-12)


def test_concurrent_evaluation():
    from concurrent.futures import ThreadPoolExecutor
    zs = [float(z) for z in np.linspace(0, 4, 40)]
    with ThreadPoolExecutor(4) as ex:
        par = list(ex.map(lambda z: wright_phi(0.5, z), zs))
    assert par == [wright_phi(0.5, z) for z in zs]
