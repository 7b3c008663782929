"""Covariance, eigensolver and whitening/coloring contracts.

Derived expectations come from independent oracles: brute-force numpy
covariance, characteristic-polynomial roots (closed form for 2x2, the
trigonometric cubic solver for 3x3), and recomputed second moments.
"""

import itertools

import numpy as np
import pytest

from retinagen import linalg as L
from retinagen.errors import (
    ConfigurationError,
    ContractError,
    DegenerateInputError,
    DimensionError,
)


def brute_cov(x, eps=0.0):
    """Oracle: plain numpy covariance with 1/N normalization."""
    xc = x - x.mean(axis=1, keepdims=True)
    return xc @ xc.T / x.shape[1] + eps * np.eye(x.shape[0])


def charpoly_roots_2x2(a):
    """Oracle: eigenvalues of a symmetric 2x2 from the quadratic formula."""
    tr = a[0, 0] + a[1, 1]
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    disc = np.sqrt(max(tr * tr / 4 - det, 0.0))
    return np.array([tr / 2 + disc, tr / 2 - disc])


def charpoly_roots_3x3(a_int):
    """Oracle: roots of the integer characteristic polynomial of a symmetric 3x3.

    Coefficients are exact integers, so repeated roots are detected by a
    zero discriminant and solved with exact rational formulas; distinct
    roots start from the trigonometric closed form and get Newton-polished
    against the integer polynomial.
    """
    m = [[int(v) for v in row] for row in a_int]
    tr = m[0][0] + m[1][1] + m[2][2]
    minors = (m[1][1] * m[2][2] - m[1][2] * m[2][1]
              + m[0][0] * m[2][2] - m[0][2] * m[2][0]
              + m[0][0] * m[1][1] - m[0][1] * m[1][0])
    det = (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
           - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
           + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))
    # char poly: x^3 + b x^2 + c x + d
    b, c, d = -tr, minors, -det
    disc = 18 * b * c * d - 4 * b ** 3 * d + b * b * c * c - 4 * c ** 3 - 27 * d * d
    if disc == 0:
        p0 = b * b - 3 * c
        if p0 == 0:
            return np.full(3, -b / 3.0)
        dbl = (9 * d - b * c) / (2 * p0)
        simple = (4 * b * c - 9 * d - b ** 3) / p0
        roots = np.array([dbl, dbl, simple])
        return np.sort(roots)[::-1]
    q = -b / 3.0
    shift = np.array([[m[i][j] - (q if i == j else 0.0) for j in range(3)] for i in range(3)])
    p2 = (shift * shift).sum() / 6.0
    p = np.sqrt(p2)
    r = min(1.0, max(-1.0, np.linalg.det(shift) / (2.0 * p ** 3)))
    phi = np.arccos(r) / 3.0
    roots = q + 2 * p * np.cos(phi + np.array([0.0, -2 * np.pi / 3, 2 * np.pi / 3]))
    for _ in range(4):  # polish simple roots on the exact polynomial
        pv = ((roots + b) * roots + c) * roots + d
        dv = (3 * roots + 2 * b) * roots + c
        roots = roots - pv / dv
    return np.sort(roots)[::-1]


# ---------------------------------------------------------------------
# covariance
# ---------------------------------------------------------------------


def test_covariance_hand_example():
    f = L.FeatureMatrix(np.array([[1.0, -1.0], [1.0, -1.0]]))
    cov = L.covariance(f, eps_reg=0.0)
    np.testing.assert_allclose(cov, [[1.0, 1.0], [1.0, 1.0]])
    np.testing.assert_allclose(cov, brute_cov(np.array([[1.0, -1.0], [1.0, -1.0]])))
    np.testing.assert_allclose(f.mean, [0.0, 0.0])


def test_covariance_constant_features_is_ridge():
    f = L.FeatureMatrix(np.full((3, 10), 4.2))
    cov = L.covariance(f, eps_reg=1e-5)
    np.testing.assert_allclose(cov, 1e-5 * np.eye(3), atol=1e-18)


def test_covariance_exactly_symmetric():
    rng = np.random.default_rng(0)
    f = L.FeatureMatrix(rng.normal(size=(13, 77)))
    cov = L.covariance(f)
    assert np.abs(cov - cov.T).max() == 0.0


def test_covariance_centers_in_place():
    rng = np.random.default_rng(1)
    x = rng.normal(3.0, 1.0, size=(4, 50))
    f = L.FeatureMatrix(x.copy())
    L.covariance(f)
    assert np.abs(f.values.sum(axis=1)).max() < 1e-6 * 50


def test_covariance_needs_two_samples():
    with pytest.raises(DegenerateInputError):
        L.covariance(L.FeatureMatrix(np.ones((3, 1))))


def test_covariance_matches_brute_force_random():
    rng = np.random.default_rng(2)
    for _ in range(10):
        x = rng.normal(size=(6, 40))
        f = L.FeatureMatrix(x.copy())
        np.testing.assert_allclose(L.covariance(f, 1e-5), brute_cov(x, 1e-5), atol=1e-12)


# ---------------------------------------------------------------------
# eigensolver
# ---------------------------------------------------------------------


def test_sym_eig_diagonal():
    d = L.sym_eig(np.diag([3.0, 2.0]))
    np.testing.assert_allclose(d.eigvals, [3.0, 2.0])
    np.testing.assert_allclose(np.abs(d.eigvecs), np.eye(2), atol=1e-12)


def test_sym_eig_2x2_hand_case():
    d = L.sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(d.eigvals, [3.0, 1.0], atol=1e-12)


def test_sym_eig_reconstruction_and_orthonormality():
    rng = np.random.default_rng(3)
    for n in (2, 3, 8, 16, 33):
        a = rng.normal(size=(n, n))
        a = (a + a.T) / 2
        d = L.sym_eig(a)
        rec = d.eigvecs @ np.diag(d.eigvals) @ d.eigvecs.T
        assert np.abs(rec - a).max() < 1e-8
        assert np.abs(rec - a).max() < 1e-7 * max(np.abs(a).max(), 1.0)
        assert np.abs(d.eigvecs.T @ d.eigvecs - np.eye(n)).max() < 1e-8
        assert np.all(np.diff(d.eigvals) <= 1e-12)


def test_sym_eig_rejects_nonsymmetric():
    with pytest.raises(ContractError):
        L.sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_sym_eig_rejects_nonsquare():
    with pytest.raises(DimensionError):
        L.sym_eig(np.zeros((2, 3)))


def test_sym_eig_sign_convention_deterministic():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(5, 5))
    a = (a + a.T) / 2
    d1, d2 = L.sym_eig(a), L.sym_eig(a)
    np.testing.assert_array_equal(d1.eigvecs, d2.eigvecs)
    for j in range(5):
        col = d1.eigvecs[:, j]
        first = col[np.abs(col) > 1e-12][0]
        assert first > 0


def test_sym_eig_zero_matrix():
    d = L.sym_eig(np.zeros((3, 3)))
    np.testing.assert_array_equal(d.eigvals, np.zeros(3))
    np.testing.assert_array_equal(d.eigvecs, np.eye(3))


def test_sym_eig_all_integer_2x2_vs_charpoly():
    vals = range(-3, 4)
    for a00, a01, a11 in itertools.product(vals, vals, vals):
        a = np.array([[a00, a01], [a01, a11]], dtype=float)
        d = L.sym_eig(a)
        np.testing.assert_allclose(d.eigvals, charpoly_roots_2x2(a), atol=1e-8)


def test_sym_eig_all_integer_3x3_vs_charpoly():
    vals = range(-3, 4)
    for a00, a01, a02, a11, a12, a22 in itertools.product(*([vals] * 6)):
        a = np.array([[a00, a01, a02],
                      [a01, a11, a12],
                      [a02, a12, a22]], dtype=float)
        d = L.sym_eig(a)
        expected = charpoly_roots_3x3(a)
        if np.abs(d.eigvals - expected).max() >= 1e-8:  # pragma: no cover
            raise AssertionError(f"mismatch for {a.tolist()}: {d.eigvals} vs {expected}")


# ---------------------------------------------------------------------
# matrix powers
# ---------------------------------------------------------------------


def test_mat_power_identity_inverse_sqrt():
    np.testing.assert_allclose(L.mat_power_sym(np.eye(4), -0.5), np.eye(4), atol=1e-12)


def test_mat_power_sqrt_of_diagonal():
    np.testing.assert_allclose(L.mat_power_sym(np.diag([4.0, 9.0]), 0.5),
                               np.diag([2.0, 3.0]), atol=1e-12)


def test_mat_power_inverse_sqrt_whitens_spd():
    rng = np.random.default_rng(5)
    m = rng.normal(size=(6, 6))
    a = m @ m.T + 0.5 * np.eye(6)
    b = L.mat_power_sym(a, -0.5)
    np.testing.assert_allclose(b @ a @ b, np.eye(6), atol=1e-6)


def test_mat_power_floor_must_be_positive():
    with pytest.raises(ConfigurationError):
        L.mat_power_sym(np.eye(2), 0.5, eig_floor=0.0)


# ---------------------------------------------------------------------
# whiten / color / wct
# ---------------------------------------------------------------------


def _random_features(rng, c=8, n=500, dtype=np.float64):
    mix = rng.normal(size=(c, c))
    x = mix @ rng.normal(size=(c, n)) + rng.normal(size=(c, 1))
    return x.astype(dtype)


def test_whiten_covariance_near_identity_64bit():
    rng = np.random.default_rng(6)
    x = _random_features(rng)
    fw = L.whiten(L.FeatureMatrix(x.copy()), eps_reg=1e-9, eig_floor=1e-12)
    dev = np.abs(brute_cov(fw.values) - np.eye(8)).max()
    assert dev < 1e-6


def test_whiten_covariance_near_identity_32bit_budget():
    rng = np.random.default_rng(7)
    x = _random_features(rng, dtype=np.float32)
    fw = L.whiten(L.FeatureMatrix(np.asarray(x)), eps_reg=1e-5)
    dev = np.abs(brute_cov(fw.values) - np.eye(8)).max()
    assert dev < 1e-3


def test_whiten_mean_is_zero():
    rng = np.random.default_rng(8)
    fw = L.whiten(L.FeatureMatrix(_random_features(rng)))
    assert np.abs(fw.values.mean(axis=1)).max() < 1e-6


def test_whiten_small_hand_case():
    f = L.FeatureMatrix(np.array([[2.0, -2.0], [0.0, 0.0]]))
    fw = L.whiten(f, eps_reg=1e-5)
    cov = brute_cov(fw.values, 0.0)
    # the flat channel stays flat; the live channel must have unit variance
    assert abs(cov[0, 0] - 1.0) < 1e-3


def test_whiten_preserves_caller_matrix():
    rng = np.random.default_rng(9)
    x = _random_features(rng)
    f = L.FeatureMatrix(x.copy())
    L.whiten(f)
    np.testing.assert_array_equal(f.values, x)


def test_whiten_of_white_features_stays_white():
    rng = np.random.default_rng(10)
    x = _random_features(rng)
    fw1 = L.whiten(L.FeatureMatrix(x), eps_reg=1e-9, eig_floor=1e-12)
    fw2 = L.whiten(fw1, eps_reg=1e-9, eig_floor=1e-12)
    assert np.abs(brute_cov(fw2.values) - np.eye(8)).max() < 1e-6


def test_color_identity_coloring():
    rng = np.random.default_rng(11)
    fw = L.whiten(L.FeatureMatrix(_random_features(rng)), eps_reg=1e-9, eig_floor=1e-12)
    # a style whose covariance is (numerically) the identity and mean zero
    style_vals = L.whiten(L.FeatureMatrix(_random_features(rng)),
                          eps_reg=1e-12, eig_floor=1e-15).values
    colored = L.color(fw, L.FeatureMatrix(style_vals), eps_reg=1e-12, eig_floor=1e-15)
    assert np.abs(colored.values - fw.values).max() < 1e-6


def test_color_roundtrip_recovers_covariance():
    rng = np.random.default_rng(12)
    x = _random_features(rng)
    colored = L.color(L.whiten(L.FeatureMatrix(x.copy()), 1e-9, 1e-12),
                      L.FeatureMatrix(x.copy()), 1e-9, 1e-12)
    np.testing.assert_allclose(brute_cov(colored.values), brute_cov(x.copy()), atol=1e-4)


def test_color_matches_style_mean():
    rng = np.random.default_rng(13)
    x = _random_features(rng)
    style = _random_features(rng) + 5.0
    colored = L.color(L.whiten(L.FeatureMatrix(x)), L.FeatureMatrix(style))
    assert np.abs(colored.values.mean(axis=1) - style.mean(axis=1)).max() < 1e-6


def test_color_channel_mismatch():
    with pytest.raises(DimensionError):
        L.color(L.FeatureMatrix(np.zeros((3, 5))), L.FeatureMatrix(np.ones((4, 5))))


def test_coloring_property_32bit_budget():
    # the eps ridge biases the recovered covariance by about
    # eps * cond(cov), so the stated budget presumes a regularizer
    # matched to the feature conditioning
    rng = np.random.default_rng(14)
    for _ in range(5):
        mix = np.eye(8) + 0.4 * rng.normal(size=(8, 8))
        x = (mix @ rng.normal(size=(8, 500))).astype(np.float32)
        s = (mix.T @ rng.normal(size=(8, 500)) + 1.0).astype(np.float32)
        colored = L.color(L.whiten(L.FeatureMatrix(np.asarray(x)), eps_reg=1e-6, eig_floor=1e-9),
                          L.FeatureMatrix(np.asarray(s)), eps_reg=1e-6, eig_floor=1e-9)
        assert np.abs(brute_cov(colored.values) - brute_cov(np.asarray(s, np.float64))).max() < 1e-3


def test_wct_alpha_zero_is_content_exactly():
    rng = np.random.default_rng(15)
    x = _random_features(rng)
    out = L.wct(L.FeatureMatrix(x.copy()), L.FeatureMatrix(_random_features(rng)), alpha=0.0)
    np.testing.assert_array_equal(out.values, x)


def test_wct_alpha_one_style_equals_content_preserves_cov():
    rng = np.random.default_rng(16)
    x = _random_features(rng)
    out = L.wct(L.FeatureMatrix(x.copy()), L.FeatureMatrix(x.copy()), alpha=1.0,
                eps_reg=1e-9, eig_floor=1e-12)
    np.testing.assert_allclose(brute_cov(out.values), brute_cov(x.copy()), atol=1e-4)


def test_wct_alpha_linearity_exact():
    rng = np.random.default_rng(17)
    c = L.FeatureMatrix(_random_features(rng))
    s = L.FeatureMatrix(_random_features(rng))
    out0 = L.wct(c, s, 0.0)
    out1 = L.wct(c, s, 1.0)
    half = L.wct(c, s, 0.5)
    np.testing.assert_array_equal(half.values, 0.5 * out1.values + 0.5 * out0.values)


def test_wct_alpha_domain():
    f = L.FeatureMatrix(np.zeros((2, 4)))
    with pytest.raises(ConfigurationError):
        L.wct(f, f, alpha=1.5)
