import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windgp.covariance import (
    alpha,
    alpha_matrix,
    bessel_k,
    build_covariance,
    cov_m1,
    cov_m2,
    cov_m3,
    cov_m4,
    cov_ns_gaussian,
    cov_ns_matern,
    exp_corr,
    m5_angles,
    m5_sigma_fields,
    matern_corr,
    ns_quad_q,
    sq_exp_corr,
)
from windgp.errors import ConfigError
from windgp.geometry import lga_kernel
from windgp.linalg import cholesky
from windgp.models import GridSpec, LatentFields, ModelSpec

from conftest import random_spd, random_winds
from oracles import bessel_k_quadrature, kernel_overlap_correlation

# K_nu(x) from quadrature of the integral representation (oracles.bessel_k_quadrature)
K_QUAD = {
    (1.0, 1.0): 0.6019072301972347,
    (1.0, 0.3): 3.055992033457325,
    (2.5, 2.0): 0.3897977588961997,
    (0.5, 1.7): 0.1756041837013583,
}


@pytest.mark.parametrize("nu_x, expected", K_QUAD.items())
def test_bessel_k_against_quadrature(nu_x, expected):
    assert bessel_k(*nu_x) == pytest.approx(expected, rel=1e-10)


def test_bessel_k_oracle_is_live():
    assert bessel_k_quadrature(1.0, 1.0) == pytest.approx(K_QUAD[(1.0, 1.0)], rel=1e-12)


def test_bessel_k_closed_form_half():
    x = np.linspace(0.1, 10, 50)
    np.testing.assert_allclose(bessel_k(0.5, x), np.sqrt(np.pi / (2 * x)) * np.exp(-x),
                               rtol=1e-12)


def test_bessel_k_symmetry_and_monotone():
    x = np.linspace(0.05, 8, 200)
    np.testing.assert_allclose(bessel_k(-1.3, x), bessel_k(1.3, x), rtol=1e-13)
    assert np.all(np.diff(bessel_k(1.0, x)) < 0)


def test_bessel_k_domain():
    with pytest.raises(ValueError):
        bessel_k(1.0, 0.0)
    with pytest.raises(ValueError):
        bessel_k(1.0, -2.0)


def test_matern_corr_examples(backend):
    assert matern_corr(0.0, 1.0) == 1.0
    assert matern_corr(1.0, 0.5) == pytest.approx(math.exp(-1), rel=1e-13)
    assert matern_corr(1.0, 1.0) == pytest.approx(K_QUAD[(1.0, 1.0)], rel=1e-10)
    t = np.linspace(0, 20, 400)
    vals = matern_corr(t, 1.0)
    assert np.all(np.diff(vals[vals > 1e-300]) < 0)
    assert vals[0] == 1.0 and np.all(vals >= 0)
    assert matern_corr(1e-9, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert matern_corr(800.0, 2.0) == 0.0


def test_sq_exp_and_exp_corr():
    assert sq_exp_corr(0.0, 2.0) == 1.0
    assert sq_exp_corr(2.0, 2.0) == pytest.approx(math.exp(-1))
    assert sq_exp_corr(4.0, 2.0) == pytest.approx(math.exp(-4))
    assert exp_corr(0.0, 3.0) == 1.0
    assert exp_corr(3.0 * math.log(20), 3.0) == pytest.approx(0.05)
    assert exp_corr(3.0, 3.0) == pytest.approx(math.exp(-1))


def test_cov_m1_basic(backend, rng):
    x = rng.uniform(0, 5, (8, 2))
    c = cov_m1(x, 2.5, 1.3)
    np.testing.assert_allclose(np.diag(c), 2.5, rtol=0, atol=1e-15)
    np.testing.assert_array_equal(c, c.T)
    # collinear equally spaced sites give a Toeplitz matrix
    c3 = cov_m1([[0, 0], [1, 1], [2, 2]], 1.0, 0.7)
    r1 = matern_corr(math.sqrt(2) / 0.7, 1.0)
    r2 = matern_corr(2 * math.sqrt(2) / 0.7, 1.0)
    np.testing.assert_allclose(c3, [[1, r1, r2], [r1, 1, r1], [r2, r1, 1]], rtol=1e-14)


def test_m1_equals_m2_isotropic(backend, rng):
    for _ in range(5):
        x = rng.uniform(-3, 3, (12, 2))
        th = rng.uniform(0, np.pi / 2)
        np.testing.assert_allclose(cov_m2(x, 1.7, 0.9, 1.0, th, 1.0, 1.0), cov_m1(x, 1.7, 0.9),
                                   rtol=0, atol=1e-12)


def test_m2_anisotropy_hand_computed(backend):
    t, phi = 0.8, 1.1
    along = t * np.array([1, 1]) / math.sqrt(2)
    across = t * np.array([1, -1]) / math.sqrt(2)
    x = np.array([[0.0, 0.0], along, across])
    c = cov_m2(x, 1.0, phi, 1.0, np.pi / 4, 4.0, 1.0)
    # u^T A u = 4 t^2 along the major direction, t^2 across it
    assert c[0, 1] == pytest.approx(matern_corr(2 * t / phi, 1.0), rel=1e-12)
    assert c[0, 2] == pytest.approx(matern_corr(t / phi, 1.0), rel=1e-12)
    assert c[0, 1] < c[0, 2]


def test_m2_even_in_lag(backend):
    x = np.array([[0.3, -0.2], [1.1, 0.9]])
    c = cov_m2(x, 1.0, 0.8, 1.0, 0.4, 2.0, 0.5)
    c_rev = cov_m2(x[::-1], 1.0, 0.8, 1.0, 0.4, 2.0, 0.5)
    assert c[0, 1] == c_rev[0, 1]


def test_ns_quad_q_examples():
    assert ns_quad_q((1, 2), (1, 2), np.eye(2), np.eye(2)) == 0.0
    assert ns_quad_q((0, 0), (3, 4), np.eye(2), np.eye(2)) == pytest.approx(25.0)
    q = ns_quad_q((1, 1), (0, 0), np.diag([4.0, 1.0]), np.diag([2.0, 3.0]))
    assert q == pytest.approx(5.0 / 6.0, rel=1e-14)


def test_ns_matern_diag_and_symmetry(backend, rng):
    x = rng.uniform(0, 4, (15, 2))
    s = random_spd(rng, 15)
    c = cov_ns_matern(x, s, 2.0, 1.0)
    np.testing.assert_allclose(np.diag(c), 2.0, rtol=1e-14)
    np.testing.assert_allclose(c, c.T, rtol=0, atol=1e-14)
    cholesky(c)


def test_ns_matern_constant_kernel_is_stationary(backend, rng):
    x = rng.uniform(0, 4, (10, 2))
    k = random_spd(rng, 1)[0]
    s = np.repeat(k[None], 10, axis=0)
    c = cov_ns_matern(x, s, 1.0, 1.0)
    # prefactor 1: correlation is the Matern at 2 sqrt(nu Q)
    kinv = np.linalg.inv(k)
    for i in range(10):
        for j in range(10):
            u = x[i] - x[j]
            assert c[i, j] == pytest.approx(matern_corr(2 * math.sqrt(u @ kinv @ u), 1.0),
                                            rel=1e-12, abs=1e-15)


def test_ns_matern_rejects_non_spd(rng):
    x = rng.uniform(0, 1, (2, 2))
    bad = np.array([np.eye(2), np.diag([1.0, -1.0])])
    with pytest.raises(ValueError):
        cov_ns_matern(x, bad, 1.0)


def test_ns_gaussian_matches_kernel_overlap_quadrature(backend, rng):
    for _ in range(3):
        s = random_spd(rng, 2, 0.3, 2.0)
        si = rng.uniform(-1, 1, 2)
        sj = si + rng.normal(size=2) * 0.8
        closed = cov_ns_gaussian(np.array([si, sj]), s, 1.0)[0, 1]
        oracle = kernel_overlap_correlation(si, sj, s[0] / 4, s[1] / 4)
        assert closed == pytest.approx(oracle, rel=1e-3)


def test_ns_matern_large_nu_approaches_gaussian(backend, rng):
    x = rng.uniform(0, 2, (6, 2))
    s = random_spd(rng, 6, 0.5, 2.0)
    np.testing.assert_allclose(cov_ns_matern(x, s, 1.0, 60.0), cov_ns_gaussian(x, s, 1.0),
                               atol=5e-3)


def test_m3_constant_wind_equals_m2(backend, rng):
    # constant winds: Q uses Sigma^-1 = R diag(1/l1, 1/l2) R^T, so M2 with
    # lambda_k = 1/l_k, theta = wind angle, phi = 1/(2 sqrt(nu)) matches exactly
    x = rng.uniform(0, 3, (9, 2))
    om = 0.6
    w = np.tile([math.cos(om), math.sin(om)], (9, 1))
    l1, l2, nu = 2.0, 0.4, 1.0
    c3 = cov_m3(x, w, 1.3, nu, l1, l2)
    c2 = cov_m2(x, 1.3, 1 / (2 * math.sqrt(nu)), nu, om, 1 / l1, 1 / l2)
    np.testing.assert_allclose(c3, c2, rtol=1e-11, atol=1e-14)


def test_m3_wind_flip_invariance(backend, rng):
    x = rng.uniform(0, 3, (12, 2))
    w = random_winds(rng, 12)
    c = cov_m3(x, w, 1.0, 1.0, 1.5, 0.3)
    np.testing.assert_array_equal(cov_m3(x, -w, 1.0, 1.0, 1.5, 0.3), c)
    flip = rng.random(12) < 0.5
    w2 = np.where(flip[:, None], -w, w)
    np.testing.assert_array_equal(cov_m3(x, w2, 1.0, 1.0, 1.5, 0.3), c)
    np.testing.assert_allclose(np.diag(c), 1.0, rtol=1e-14)


def test_m3_aligned_vs_opposite_equal(backend):
    x = np.array([[0.0, 0.0], [1.0, 0.0]])
    w = np.array([0.6, 0.8])
    same = cov_m3(x, [w, w], 1.0, 1.0, 2.0, 0.5)
    opposite = cov_m3(x, [w, -w], 1.0, 1.0, 2.0, 0.5)
    assert same[0, 1] == opposite[0, 1]


def test_alpha_examples():
    w = (1.0, 0.0)
    assert alpha((1, 2), (1, 2), w, w, 0.5, 3.0) == 1.0
    # perpendicular wind: projection norm 0
    assert alpha((0, 0), (0, 2), w, w, 0.5, 3.0) == pytest.approx(math.exp(-2 / 0.5))
    assert alpha((0, 0), (2, 0), w, w, 0.5, 0.0) == pytest.approx(math.exp(-2 / 0.5))
    assert alpha((0, 0), (2, 0), w, w, 0.5, 3.0) == pytest.approx(math.exp(-2 / 3.5))


def test_alpha_matrix_matches_scalar(backend, rng):
    x = rng.uniform(0, 3, (7, 2))
    w = random_winds(rng, 7)
    g = GridSpec(np.vstack([x[:3], rng.uniform(0, 3, (4, 2))]), random_winds(rng, 7))
    a = alpha_matrix(x, w, g, 0.4, 1.2)
    for i in range(7):
        for k in range(g.m):
            assert a[i, k] == pytest.approx(alpha(x[i], g.points[k], w[i], g.winds[k], 0.4, 1.2),
                                            rel=1e-13)


def test_m4_diag_exact_and_psd(backend, rng):
    x = rng.uniform(0, 5, (20, 2))
    w = random_winds(rng, 20)
    c = cov_m4(x, w, None, 3.3, 0.7, 2.1)
    assert np.max(np.abs(np.diag(c) - 3.3)) == 0.0
    np.testing.assert_allclose(c, c.T, atol=1e-14)
    assert np.linalg.eigvalsh(c).min() > -1e-10


def test_m4_aligned_beats_opposite(backend):
    x = np.array([[0.0, 0.0], [1.0, 0.0]])
    w = np.array([0.8, 0.6])
    for phi2 in (1e-3, 0.1, 1.0, 10.0):
        same = cov_m4(x, [w, w], None, 1.0, 0.5, phi2)[0, 1]
        opp = cov_m4(x, [w, -w], None, 1.0, 0.5, phi2)[0, 1]
        assert same > opp


def test_m4_increases_with_projection_norm(backend):
    x = np.array([[0.0, 0.0], [1.5, 0.0]])
    angles = np.linspace(np.pi / 2, 0, 30)  # |proj| = cos(angle) increases
    corr = []
    for a in angles:
        w = [math.cos(a), math.sin(a)]
        corr.append(cov_m4(x, [w, w], None, 1.0, 0.6, 1.4)[0, 1])
    assert np.all(np.diff(corr) > 0)


def test_m4_phi2_to_zero(backend, rng):
    x = rng.uniform(0, 5, (15, 2))
    w = random_winds(rng, 15)
    c0 = cov_m4(x, w, None, 1.0, 0.9, 0.0)
    c1 = cov_m4(x, w, None, 1.0, 0.9, 1e-8)
    assert np.max(np.abs(c0 - c1)) < 1e-6


def test_m4_regular_grid_and_cross(backend, rng):
    x = rng.uniform(0, 1, (6, 2))
    w = random_winds(rng, 6)
    g0, g1 = np.meshgrid(np.linspace(0, 1, 5), np.linspace(0, 1, 5))
    pts = np.column_stack([g0.ravel(), g1.ravel()])
    grid = GridSpec(pts, random_winds(rng, 25))
    full = cov_m4(x, w, grid, 1.0, 0.3, 0.5)
    cross = cov_m4(x[:4], w[:4], grid, 1.0, 0.3, 0.5, targets=x[4:], target_winds=w[4:])
    np.testing.assert_allclose(cross, full[:4, 4:], atol=1e-14)


def test_grid_rejects_duplicates_and_empty():
    with pytest.raises(ConfigError):
        GridSpec([[0, 0], [0, 0]], [[1, 0], [1, 0]])
    with pytest.raises(ConfigError):
        GridSpec(np.zeros((0, 2)), np.zeros((0, 2)))


def test_m5_sigma_fields_examples():
    lat = LatentFields(np.log([4.0, 1.0, 1.0]), np.log([1.0, 1.0, 2.0]), [0.0, 0.0, -40.0])
    assert m5_angles(0.0) == pytest.approx(np.pi / 4)
    s = m5_sigma_fields(lat)
    np.testing.assert_allclose(s[1], np.eye(2), atol=1e-15)
    np.testing.assert_allclose(s[2], np.diag([1.0, 2.0]), atol=1e-15)
    np.testing.assert_allclose(np.linalg.eigvalsh(s[0]), [1.0, 4.0], rtol=1e-13)
    major = np.linalg.eigh(s[0])[1][:, 1]
    assert abs(major @ [1 / math.sqrt(2), 1 / math.sqrt(2)]) == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       st.lists(st.floats(-8, 8), min_size=3, max_size=3))
def test_m5_sigma_fields_spd_and_angle_range(l1, l2, g):
    lat = LatentFields(l1, l2, g)
    s = m5_sigma_fields(lat)
    assert np.all(np.linalg.eigvalsh(s) > 0)
    th = m5_angles(g)
    assert np.all((th >= 0) & (th <= np.pi / 2))


def test_build_covariance_dispatch(backend, rng):
    x = rng.uniform(0, 3, (10, 2))
    w = random_winds(rng, 10)
    np.testing.assert_array_equal(build_covariance(ModelSpec("M1"), {"phi": 0.8}, x, sigma2=2.0),
                                  cov_m1(x, 2.0, 0.8))
    c4 = build_covariance(ModelSpec("M4"), {"phi1": 0.5, "phi2": 1.0}, x, w, sigma2=1.5)
    assert np.max(np.abs(np.diag(c4) - 1.5)) == 0.0
    # M3 with constant winds is stationary: entries depend on the lag only
    wc = np.tile([0.0, 1.0], (4, 1))
    xs = np.array([[0, 0], [1, 0], [0.3, 0.7], [1.3, 0.7]])
    c3 = build_covariance(ModelSpec("M3"), {"lambda1sq": 1.0, "lambda2sq": 0.2}, xs, wc)
    assert c3[0, 2] == pytest.approx(c3[1, 3], rel=1e-13)
    lat = LatentFields(np.zeros(10), np.zeros(10), np.zeros(10))
    c5 = build_covariance(ModelSpec("M5"), {"latent": lat}, x)
    np.testing.assert_allclose(c5, cov_m1(x, 1.0, 0.5), rtol=1e-12, atol=1e-15)


def test_build_covariance_mismatch():
    x = np.zeros((1, 2))
    with pytest.raises(ConfigError):
        build_covariance(ModelSpec("M1"), {"phi1": 1.0}, x)
    with pytest.raises(ConfigError):
        build_covariance(ModelSpec("M3"), {"lambda1sq": 1.0, "lambda2sq": 1.0}, x)
    with pytest.raises(ConfigError):
        build_covariance(ModelSpec("M5"), {"phi": 1.0}, x)
    with pytest.raises(ConfigError):
        ModelSpec("M7")


def test_lga_kernel_feeds_m3(backend):
    x = np.array([[0.0, 0.0], [0.5, 0.5]])
    w = np.array([[1.0, 0.0], [0.0, 1.0]])
    s = np.array([lga_kernel(w[0], 2.0, 0.5), lga_kernel(w[1], 2.0, 0.5)])
    np.testing.assert_array_equal(cov_m3(x, w, 1.0, 1.0, 2.0, 0.5), cov_ns_matern(x, s, 1.0))
