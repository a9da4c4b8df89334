"""Dense-CRF mean field: oracle equivalence, invariants, dispatch."""

import numpy as np
import pytest
from sklearn.base import clone

from oracles import reference_mean_field
from conftest import make_blocky_image, make_noise_image, make_prob_volume
from pseudomask.crf import (
    COLOR_DECOMPOSITION_BUDGET,
    DenseCrf,
    EXACT_PIXEL_GUARD,
    build_unary,
    crf_refine,
    mean_field_exact,
    mean_field_fast,
)
from pseudomask.exceptions import SizeError, ValidationError

SMALL_PARAMS = dict(iterations=5, w1=3.0, theta_alpha=4.0, theta_beta=13.0,
                    w2=2.0, theta_gamma=2.0)


def _softmax_neg(u):
    z = -u - (-u).max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


class TestBuildUnary:
    def test_prob_one_is_zero(self):
        assert build_unary(np.array([[[1.0]]]))[0, 0, 0] == 0.0

    def test_clamped_at_eps(self):
        u = build_unary(np.array([[[0.0]]]), eps=1e-8)
        assert u[0, 0, 0] == pytest.approx(-np.log(1e-8))

    def test_half_is_ln2(self):
        assert build_unary(np.array([[[0.5]]]))[0, 0, 0] == pytest.approx(
            np.log(2.0), abs=1e-12)

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            build_unary(np.array([[[-0.5]]]))


class TestExactBackend:
    def test_unary_only_equals_softmax(self, rng):
        probs = make_prob_volume(rng, 3, 4, 4)
        img = make_blocky_image(rng, 4, 4)
        q = mean_field_exact(probs, img, iterations=10, w1=0.0, w2=0.0)
        expected = _softmax_neg(build_unary(probs))
        np.testing.assert_allclose(q, expected, atol=1e-15)

    def test_single_pixel_any_params(self, rng):
        probs = make_prob_volume(rng, 4, 1, 1)
        img = make_noise_image(rng, 1, 1)
        q = mean_field_exact(probs, img, **SMALL_PARAMS)
        np.testing.assert_allclose(q, _softmax_neg(build_unary(probs)),
                                   atol=1e-12)

    def test_matches_reference_4x4(self, rng):
        probs = make_prob_volume(rng, 3, 4, 4)
        img = make_blocky_image(rng, 4, 4)
        mine = mean_field_exact(probs, img, **SMALL_PARAMS)
        ref = reference_mean_field(probs, img, **SMALL_PARAMS)
        assert np.abs(mine - ref).max() <= 1e-10

    def test_iterations_zero(self, rng):
        probs = make_prob_volume(rng, 3, 3, 3)
        img = make_noise_image(rng, 3, 3)
        q = mean_field_exact(probs, img, iterations=0, **{
            k: v for k, v in SMALL_PARAMS.items() if k != "iterations"})
        np.testing.assert_allclose(q, _softmax_neg(build_unary(probs)),
                                   atol=1e-15)

    def test_rows_sum_to_one(self, rng):
        probs = make_prob_volume(rng, 4, 6, 5)
        img = make_blocky_image(rng, 6, 5)
        q = mean_field_exact(probs, img, **SMALL_PARAMS)
        np.testing.assert_allclose(q.sum(axis=0), 1.0, atol=1e-6)
        assert q.min() >= 0.0 and q.max() <= 1.0

    def test_uniform_problem_stays_uniform(self):
        probs = np.full((3, 4, 4), 1 / 3)
        img = np.full((4, 4, 3), 90, dtype=np.uint8)
        q = mean_field_exact(probs, img, **SMALL_PARAMS)
        np.testing.assert_allclose(q, 1 / 3, atol=1e-12)

    def test_permutation_equivariance(self, rng):
        probs = make_prob_volume(rng, 3, 4, 5)
        img = make_blocky_image(rng, 4, 5)
        perm = [2, 0, 1]
        q = mean_field_exact(probs, img, **SMALL_PARAMS)
        q_perm = mean_field_exact(probs[perm], img, **SMALL_PARAMS)
        np.testing.assert_allclose(q_perm, q[perm], atol=1e-12)

    def test_zero_weights_ignore_image(self, rng):
        probs = make_prob_volume(rng, 3, 4, 4)
        a = mean_field_exact(probs, make_noise_image(rng, 4, 4),
                             iterations=5, w1=0.0, w2=0.0)
        b = mean_field_exact(probs, make_blocky_image(rng, 4, 4),
                             iterations=5, w1=0.0, w2=0.0)
        np.testing.assert_array_equal(a, b)

    def test_bitwise_deterministic(self, rng):
        probs = make_prob_volume(rng, 3, 5, 5)
        img = make_blocky_image(rng, 5, 5)
        a = mean_field_exact(probs, img, **SMALL_PARAMS)
        b = mean_field_exact(probs, img, **SMALL_PARAMS)
        assert np.array_equal(a, b)

    def test_size_guard(self, rng):
        h = w = 65  # 4225 > 4096
        probs = make_prob_volume(rng, 2, h, w)
        img = make_noise_image(rng, h, w)
        with pytest.raises(SizeError):
            mean_field_exact(probs, img, iterations=1)

    def test_denoises_two_region_image(self, rng):
        # a clean two-region image with noisy unaries: the pairwise
        # terms must recover the clean partition
        h = w = 8
        img = np.zeros((h, w, 3), dtype=np.uint8)
        img[:, : w // 2] = (200, 30, 30)
        img[:, w // 2:] = (30, 30, 200)
        truth = np.zeros((h, w), dtype=int)
        truth[:, w // 2:] = 1
        probs = np.where(truth[None] == np.arange(2)[:, None, None], 0.6, 0.4)
        flips = rng.random((h, w)) < 0.2
        noisy = probs.copy()
        noisy[:, flips] = probs[::-1][:, flips]
        q = mean_field_exact(noisy, img, iterations=10, w1=6.0,
                             theta_alpha=20.0, theta_beta=20.0,
                             w2=1.0, theta_gamma=2.0)
        assert np.array_equal(q.argmax(axis=0), truth)


class TestFastBackend:
    def test_unary_only_equals_softmax(self, rng):
        probs = make_prob_volume(rng, 3, 5, 5)
        img = make_noise_image(rng, 5, 5)
        q = mean_field_fast(probs, img, iterations=8, w1=0.0, w2=0.0)
        np.testing.assert_allclose(q, _softmax_neg(build_unary(probs)),
                                   atol=1e-15)

    def test_color_route_matches_exact(self, rng):
        probs = make_prob_volume(rng, 3, 12, 12)
        img = make_blocky_image(rng, 12, 12)
        qe = mean_field_exact(probs, img, **SMALL_PARAMS)
        qf = mean_field_fast(probs, img, **SMALL_PARAMS)
        assert np.abs(qe - qf).max() <= 1e-3

    def test_16x16_within_tolerance(self, rng):
        probs = make_prob_volume(rng, 3, 16, 16)
        img = make_blocky_image(rng, 16, 16)
        qe = mean_field_exact(probs, img, **SMALL_PARAMS)
        qf = mean_field_fast(probs, img, **SMALL_PARAMS)
        assert np.abs(qe - qf).max() <= 1e-2

    def test_lattice_route_loose_agreement(self, rng):
        # noise image above the color budget -> permutohedral path;
        # approximate filtering, so only coarse agreement is promised
        h = w = 40
        assert (h * w) ** 2 > COLOR_DECOMPOSITION_BUDGET
        probs = make_prob_volume(rng, 3, h, w)
        img = make_noise_image(rng, h, w)
        params = dict(iterations=5, w1=1.0, theta_alpha=8.0, theta_beta=13.0,
                      w2=1.0, theta_gamma=3.0)
        qe = mean_field_exact(probs, img, **params)
        qf = mean_field_fast(probs, img, **params)
        agreement = (qe.argmax(0) == qf.argmax(0)).mean()
        assert agreement >= 0.95

    def test_rows_sum_to_one(self, rng):
        probs = make_prob_volume(rng, 3, 9, 7)
        img = make_blocky_image(rng, 9, 7)
        q = mean_field_fast(probs, img, **SMALL_PARAMS)
        np.testing.assert_allclose(q.sum(axis=0), 1.0, atol=1e-6)


class TestDispatch:
    def test_strict_small_uses_exact(self, rng):
        probs = make_prob_volume(rng, 2, 6, 6)
        img = make_blocky_image(rng, 6, 6)
        strict = crf_refine(img, probs, strict=True, **SMALL_PARAMS)
        exact = mean_field_exact(probs, img, **SMALL_PARAMS)
        np.testing.assert_array_equal(strict, exact)

    def test_strict_oversize_falls_back_to_fast(self, rng):
        h = w = 65
        probs = make_prob_volume(rng, 2, h, w)
        img = make_blocky_image(rng, h, w)
        q = crf_refine(img, probs, strict=True, iterations=1, w1=0.5, w2=0.5)
        assert q.shape == (2, h, w)  # would raise SizeError on the exact path

    def test_refine_iterations_zero(self, rng):
        probs = make_prob_volume(rng, 3, 4, 4)
        img = make_noise_image(rng, 4, 4)
        q = crf_refine(img, probs, iterations=0)
        np.testing.assert_allclose(q, _softmax_neg(build_unary(probs)),
                                   atol=1e-15)

    def test_shape_mismatch_rejected(self, rng):
        with pytest.raises(ValidationError):
            crf_refine(make_noise_image(rng, 4, 4),
                       make_prob_volume(rng, 2, 5, 5))


class TestDenseCrfEstimator:
    def test_params_round_trip(self):
        crf = DenseCrf(iterations=3, w1=2.5, strict=True)
        assert clone(crf).get_params() == crf.get_params()

    def test_refine_matches_function(self, rng):
        probs = make_prob_volume(rng, 2, 5, 5)
        img = make_blocky_image(rng, 5, 5)
        crf = DenseCrf(iterations=2, w1=1.0, w2=1.0, theta_alpha=4.0,
                       theta_gamma=2.0, strict=True)
        np.testing.assert_array_equal(
            crf.refine(probs, img),
            crf_refine(img, probs, strict=True, iterations=2, w1=1.0, w2=1.0,
                       theta_alpha=4.0, theta_gamma=2.0))

    def test_predict_is_argmax(self, rng):
        probs = make_prob_volume(rng, 3, 4, 4)
        img = make_blocky_image(rng, 4, 4)
        crf = DenseCrf(iterations=1, strict=True)
        np.testing.assert_array_equal(crf.predict(probs, img),
                                      crf.refine(probs, img).argmax(axis=0))

    def test_fit_validates_params(self):
        with pytest.raises(ValidationError):
            DenseCrf(theta_alpha=0.0).fit()
        with pytest.raises(ValidationError):
            DenseCrf(iterations=-1).fit()

    def test_guard_constant_exposed(self):
        assert EXACT_PIXEL_GUARD == 4096
