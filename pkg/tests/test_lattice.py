import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jemstereo.lattice import (FeatureSpec, PermutohedralLattice, build_lattice, exact_filter,
                               image_features, stencil_weight)

from . import oracles
from .conftest import random_image


def rel_l2(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_feature_spec_validated():
    with pytest.raises(ValueError):
        FeatureSpec(0.0, 55.0)
    with pytest.raises(ValueError):
        FeatureSpec(5.0, -1.0)


def test_features_layout():
    img = np.array([[[10, 20, 30], [40, 50, 60]]], dtype=np.uint8)
    f = image_features(img, FeatureSpec(5.0, 55.0))
    np.testing.assert_allclose(f[1], [1 / 5, 0, 40 / 55, 50 / 55, 60 / 55])
    np.testing.assert_allclose(f, oracles.features(img))


def test_exact_filter_closed_forms():
    same = np.zeros((2, 5))
    np.testing.assert_allclose(exact_filter(same, np.array([1.0, 0.0])), [1.0, 1.0])
    far = np.array([[0.0] * 5, [3.0, 0, 0, 0, 0]])
    out = exact_filter(far, np.array([1.0, 0.0]))
    assert out[0] == 1.0 and out[1] == pytest.approx(np.exp(-4.5))


def test_exact_filter_matches_double_loop(rng):
    feats = rng.normal(size=(40, 5))
    vals = rng.random(40)
    np.testing.assert_allclose(exact_filter(feats, vals), oracles.gaussian_sum(feats, vals)[:, 0],
                               rtol=1e-12)


def test_exact_filter_rejects_oversize():
    with pytest.raises(ValueError):
        exact_filter(np.zeros((11, 5)), np.zeros(11), max_points=10)


def test_single_pixel_identity():
    lat = build_lattice(np.array([[[9, 8, 7]]], dtype=np.uint8))
    assert lat.n_points == 1
    assert lat.filter(np.array([2.5]))[0] == pytest.approx(2.5)


def test_matches_exact_on_random_image(rng):
    img = random_image(rng, 14, 14)
    lat = build_lattice(img)
    vals = rng.random((196, 3))
    exact = exact_filter(image_features(img, FeatureSpec()), vals)
    assert rel_l2(lat.filter(vals), exact) <= 0.05


def test_matches_exact_on_random_features(rng):
    # N = 200 points at the default bandwidths: pixel positions and random colours
    img = random_image(rng, 10, 20)
    feats = image_features(img, FeatureSpec())
    lat = PermutohedralLattice(feats)
    vals = rng.random(200)
    assert rel_l2(lat.filter(vals), exact_filter(feats, vals)) <= 0.05


def test_constant_colour_large_sigma_is_uniform_average(rng):
    img = np.full((8, 8, 3), 120, dtype=np.uint8)
    spec = FeatureSpec(sigma_x=200.0, sigma_f=55.0)
    lat = build_lattice(img, spec)
    vals = rng.random(64)
    avg = lat.filter(vals) / lat.filter(np.ones(64))
    np.testing.assert_allclose(avg, vals.mean(), rtol=0.05)


def test_normalized_constant_is_exact(rng):
    lat = build_lattice(random_image(rng, 9, 9))
    ones = lat.filter(np.ones(81))
    np.testing.assert_allclose(lat.filter(np.full(81, 3.7)) / ones, 3.7, rtol=1e-5)


def test_identical_features_identical_output(rng):
    img = random_image(rng, 6, 6)
    feats = image_features(img, FeatureSpec())
    feats[7] = feats[20]
    lat = PermutohedralLattice(feats)
    out = lat.filter(rng.random(36))
    assert out[7] == pytest.approx(out[20], rel=1e-12)


def test_indicator_mass(rng):
    img = random_image(rng, 12, 12)
    feats = image_features(img, FeatureSpec())
    lat = PermutohedralLattice(feats)
    e = np.zeros(144)
    e[70] = 1.0
    got = lat.filter(e)
    want = exact_filter(feats, e)
    assert got.sum() == pytest.approx(want.sum(), rel=0.05)
    # the response peaks at the source and follows its feature-space neighbours
    assert got.argmax() == 70
    assert np.corrcoef(got, want)[0, 1] >= 0.95


def test_linearity_and_positivity(rng):
    lat = build_lattice(random_image(rng, 10, 10))
    u, v = rng.random(100), rng.random(100)
    lhs = lat.filter(2.0 * u - 0.5 * v)
    rhs = 2.0 * lat.filter(u) - 0.5 * lat.filter(v)
    assert rel_l2(lhs, rhs) <= 1e-6
    assert (lat.filter(u) >= 0).all()
    assert (lat.filter(np.zeros(100)) == 0).all()


def test_approximate_symmetry(rng):
    lat = build_lattice(random_image(rng, 10, 10))
    u, v = rng.random(100), rng.random(100)
    a, b = u @ lat.filter(v), v @ lat.filter(u)
    assert abs(a - b) <= 0.05 * abs(b)


def test_multichannel_equals_per_channel(rng):
    lat = PermutohedralLattice(image_features(random_image(rng, 8, 8), FeatureSpec()), label_chunk=3)
    vals = rng.random((64, 7))
    stacked = lat.filter(vals)
    for c in range(7):
        np.testing.assert_allclose(stacked[:, c], lat.filter(vals[:, c]), rtol=1e-12)


def test_filter_input_checks(rng):
    lat = build_lattice(random_image(rng, 4, 4))
    with pytest.raises(ValueError):
        lat.filter(np.ones(15))
    bad = np.ones(16)
    bad[3] = np.nan
    with pytest.raises(ValueError):
        lat.filter(bad)


def test_deterministic(rng):
    img = random_image(rng, 8, 8)
    vals = rng.random(64)
    np.testing.assert_array_equal(build_lattice(img).filter(vals), build_lattice(img).filter(vals))


def test_stencil_weight_symmetric_and_peaked():
    step = np.array([1, 1, 1, 1, 1, -5])
    offs = np.stack([np.zeros(6, dtype=np.int64), step, -step, 2 * step])
    w = stencil_weight(offs, 2)
    assert w[1] == pytest.approx(w[2])
    assert w[0] > w[1] > w[3] > 0


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 12), st.integers(2, 12), st.integers(0, 2 ** 31))
def test_accuracy_property(h, w, seed):
    rng = np.random.default_rng(seed)
    img = random_image(rng, h, w)
    feats = image_features(img, FeatureSpec())
    vals = rng.random(h * w)
    out = PermutohedralLattice(feats).filter(vals)
    assert np.isfinite(out).all() and (out >= 0).all()
    assert rel_l2(out, exact_filter(feats, vals)) <= 0.05
