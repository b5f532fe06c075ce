import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from stratperc.errors import InvalidBandError, ZeroVectorError
from stratperc.geometry import (
    angle,
    ball_margin_mass,
    band_fraction,
    make_rng,
    normalize,
    sample_ball_in_band,
    sample_sphere_in_band,
    sample_unit_ball_batch,
    sample_unit_sphere,
    sample_unit_sphere_batch,
)

finite_coords = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


def vectors(min_d=2, max_d=8, min_norm=1e-6):
    return (
        st.lists(finite_coords, min_size=min_d, max_size=max_d)
        .map(lambda xs: np.array(xs))
        .filter(lambda v: np.linalg.norm(v) > min_norm)
    )


def test_normalize_345():
    assert np.allclose(normalize([3.0, 4.0]), [0.6, 0.8])


def test_normalize_identity_on_unit():
    e1 = np.zeros(6)
    e1[0] = 1.0
    assert np.array_equal(normalize(e1), e1)


def test_normalize_random_norms(rng):
    for _ in range(200):
        d = int(rng.integers(2, 10))
        x = sample_unit_ball_batch(d, 1, rng)[0]
        if np.linalg.norm(x) == 0.0:
            continue
        assert abs(np.linalg.norm(normalize(x)) - 1.0) <= 1e-12


def test_normalize_zero_vector_raises():
    with pytest.raises(ZeroVectorError):
        normalize(np.zeros(3))


@given(vectors())
def test_normalize_idempotent(v):
    once = normalize(v)
    twice = normalize(once)
    assert np.all(np.abs(twice - once) <= 1e-12)


def test_angle_basic():
    e1 = np.array([1.0, 0.0])
    e2 = np.array([0.0, 1.0])
    assert angle(e1, e1) == 0.0
    assert abs(angle(e1, e2) - math.pi / 2) < 1e-12
    assert abs(angle(e1, -e1) - math.pi) < 1e-12


def test_angle_zero_vector_raises():
    with pytest.raises(ZeroVectorError):
        angle(np.zeros(2), np.array([1.0, 0.0]))


@st.composite
def vector_pairs(draw):
    d = draw(st.integers(min_value=2, max_value=5))
    coords = st.lists(finite_coords, min_size=d, max_size=d)
    a = draw(coords.map(np.array).filter(lambda v: np.linalg.norm(v) > 1e-6))
    b = draw(coords.map(np.array).filter(lambda v: np.linalg.norm(v) > 1e-6))
    lam = draw(st.floats(min_value=1e-3, max_value=1e3))
    return a, b, lam


@given(vector_pairs())
@settings(max_examples=60)
def test_angle_symmetry_and_scale(pair):
    a, b, lam = pair
    assert angle(a, b) == angle(b, a)
    # arccos conditioning near parallel vectors caps achievable precision
    assert abs(angle(a, lam * b) - angle(a, b)) <= 1e-7


def test_ball_support_and_radial_cdf():
    d, n = 4, 100_000
    Z = sample_unit_ball_batch(d, n, make_rng(11))
    norms = np.linalg.norm(Z, axis=1)
    assert np.all(norms <= 1.0 + 1e-12)
    # P[|Z| <= 0.5] = 0.5^d for the uniform ball
    p = 0.5**d
    frac = float(np.mean(norms <= 0.5))
    sigma = math.sqrt(p * (1 - p) / n)
    assert abs(frac - p) <= 3 * sigma


def test_ball_componentwise_mean_zero():
    d, n = 5, 100_000
    Z = sample_unit_ball_batch(d, n, make_rng(12))
    means = Z.mean(axis=0)
    sigma = Z.std(axis=0) / math.sqrt(n)
    assert np.all(np.abs(means) <= 3 * sigma)


def test_sphere_norms():
    X = sample_unit_sphere_batch(7, 10_000, make_rng(13))
    assert np.all(np.abs(np.linalg.norm(X, axis=1) - 1.0) <= 1e-12)


def test_sphere_marginal_matches_quadrature_cdf():
    # oracle: trapezoid-rule CDF of (1 - t^2)^((d-3)/2) on a fine grid,
    # built independently of the sampler and of band_fraction's Simpson rule
    d, n = 5, 100_000
    grid = np.linspace(-1.0, 1.0, 200_001)
    dens = (1.0 - grid**2) ** ((d - 3) / 2.0)
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) / 2.0 * np.diff(grid))])
    cdf /= cdf[-1]
    X = sample_unit_sphere_batch(d, n, make_rng(14))
    res = stats.kstest(X[:, 0], lambda t: np.interp(t, grid, cdf))
    assert res.pvalue >= 0.01


def test_sphere_d2_angle_uniformity():
    X = sample_unit_sphere_batch(2, 100_000, make_rng(15))
    angles = np.arctan2(X[:, 1], X[:, 0])
    counts, _ = np.histogram(angles, bins=16, range=(-math.pi, math.pi))
    res = stats.chisquare(counts)
    assert res.pvalue >= 0.01


def test_band_fraction_range_and_monotone_vanishing():
    # a strict subset of a halfspace, and (for small b, where the marginal
    # density is locally flat) vanishing monotonically as b -> 0
    for d in (2, 3, 6):
        assert 0.0 < band_fraction(1.0, d) < 0.5
        prev = band_fraction(0.5, d)
        for b in (0.25, 0.1, 0.01, 1e-4):
            cur = band_fraction(b, d)
            assert 0.0 < cur < prev
            prev = cur
        assert prev < 1e-4


def test_band_fraction_d2_closed_form_and_mc():
    # d=2, b=1: the band maps to an arc of measure (arcsin 1 - arcsin 1/2)/pi
    quad = band_fraction(1.0, 2)
    arc = (math.asin(1.0) - math.asin(0.5)) / math.pi
    assert abs(quad - arc) < 1e-9
    n = 10_000_000
    rng = make_rng(16)
    hits = 0
    for _ in range(10):
        X = sample_unit_sphere_batch(2, n // 10, rng)
        t = X[:, 0]
        hits += int(np.count_nonzero((t >= -1.0) & (t <= -0.5)))
    mc = hits / n
    sigma = math.sqrt(quad * (1 - quad) / n)
    assert abs(mc - quad) <= 3 * sigma


def test_band_fraction_invalid():
    with pytest.raises(InvalidBandError):
        band_fraction(0.0, 3)
    with pytest.raises(InvalidBandError):
        band_fraction(1.5, 3)


def test_ball_margin_mass_total():
    for d in (2, 5, 9):
        assert abs(ball_margin_mass(1.0, d) - 1.0) < 1e-9
        assert ball_margin_mass(0.0, d) == 0.0


def test_band_conditioned_samplers_respect_band():
    rng = make_rng(17)
    d, b, n = 4, 0.3, 2000
    w = sample_unit_sphere(d, rng)
    on_sphere = sample_sphere_in_band(w, b, n, rng)
    proj = on_sphere @ w
    assert np.all((proj >= -b) & (proj <= -b / 2))
    in_ball = sample_ball_in_band(w, b, n, rng)
    proj = (in_ball @ w) / np.linalg.norm(in_ball, axis=1)
    assert np.all((proj >= -b - 1e-12) & (proj <= -b / 2 + 1e-12))


def test_coupling_ball_vs_sphere_band():
    # normalized band-conditioned ball draws are distributed like
    # band-conditioned sphere draws: KS on two projections at the 1% level
    rng = make_rng(18)
    d, b, n = 5, 0.25, 10_000
    w = sample_unit_sphere(d, rng)
    r = sample_unit_sphere(d, rng)
    ball = sample_ball_in_band(w, b, n, rng)
    ball = ball / np.linalg.norm(ball, axis=1)[:, None]
    sphere = sample_sphere_in_band(w, b, n, rng)
    assert stats.ks_2samp(ball @ w, sphere @ w).pvalue >= 0.01
    assert stats.ks_2samp(ball @ r, sphere @ r).pvalue >= 0.01


def test_rng_determinism_and_stream_independence():
    a = make_rng(42).standard_normal(32)
    b = make_rng(42).standard_normal(32)
    assert np.array_equal(a, b)
    c = make_rng(42, 1).standard_normal(32)
    assert not np.array_equal(a, c)
    Z1 = sample_unit_ball_batch(3, 50, make_rng(7, 4))
    Z2 = sample_unit_ball_batch(3, 50, make_rng(7, 4))
    assert np.array_equal(Z1, Z2)
