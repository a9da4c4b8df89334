"""Activation-map transforms: hand arithmetic cases plus invariants."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.base import clone

from pseudomask.cam import (
    CamTensor,
    CvsSmoother,
    assemble_unary,
    background_map,
    channel_exponents,
    coefficient_of_variation,
    cvs_smooth,
    foreground_values,
    normalize,
)
from pseudomask.exceptions import DegenerateChannelError, ValidationError


class TestCamTensor:
    def test_valid_construction(self):
        t = CamTensor(data=np.ones((2, 3, 4)), class_ids=[7, 15])
        assert t.channels == 2 and t.height == 3 and t.width == 4

    def test_rejects_nan(self):
        with pytest.raises(ValidationError):
            CamTensor(data=np.full((1, 2, 2), np.nan), class_ids=[1])

    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            CamTensor(data=np.array([[[-0.1, 0.0], [0.0, 0.0]]]), class_ids=[1])

    def test_rejects_mismatched_class_ids(self):
        with pytest.raises(ValidationError):
            CamTensor(data=np.ones((2, 2, 2)), class_ids=[5])

    def test_rejects_background_id(self):
        with pytest.raises(ValidationError):
            CamTensor(data=np.ones((1, 2, 2)), class_ids=[0])

    def test_rejects_duplicate_ids(self):
        with pytest.raises(ValidationError):
            CamTensor(data=np.ones((2, 2, 2)), class_ids=[3, 3])


class TestNormalize:
    def test_hand_case(self):
        # channel [0, 2, 4] -> [0, 0.5, 1]
        cam = np.array([[[0.0, 2.0, 4.0]]])
        np.testing.assert_allclose(normalize(cam), [[[0.0, 0.5, 1.0]]])

    def test_constant_channel_maps_to_zero(self):
        cam = np.full((1, 2, 2), 3.0)
        np.testing.assert_array_equal(normalize(cam), np.zeros((1, 2, 2)))

    def test_already_normalized_unchanged(self):
        cam = np.array([[[0.0, 0.25], [0.75, 1.0]]])
        np.testing.assert_array_equal(normalize(cam), cam)

    def test_idempotent_on_non_constant(self, rng):
        cam = rng.uniform(0, 9, (4, 6, 5))
        once = normalize(cam)
        np.testing.assert_allclose(normalize(once), once, atol=1e-12)

    def test_per_channel_extremes(self, rng):
        cam = rng.uniform(1, 5, (3, 8, 8))
        out = normalize(cam)
        for c in range(3):
            assert out[c].min() == 0.0
            assert out[c].max() == 1.0


class TestBackgroundMap:
    def test_peak_channel_gives_zero(self):
        norm = np.array([[[1.0]]])
        assert background_map(norm, 11.0)[0, 0] == 0.0

    def test_empty_activation_gives_one(self):
        norm = np.zeros((2, 1, 1))
        assert background_map(norm, 11.0)[0, 0] == 1.0

    def test_hand_case(self):
        # max 0.5, alpha 2 -> 0.25
        norm = np.array([[[0.5]], [[0.3]]])
        np.testing.assert_allclose(background_map(norm, 2.0), [[0.25]])

    def test_bounded_and_monotone(self, rng):
        norm = rng.uniform(0, 1, (3, 5, 5))
        bg = background_map(norm, 7.0)
        assert bg.min() >= 0.0 and bg.max() <= 1.0
        bumped = norm.copy()
        bumped[0] = np.minimum(1.0, bumped[0] + 0.1)
        assert np.all(background_map(bumped, 7.0) <= bg + 1e-15)

    def test_negative_alpha_rejected(self):
        with pytest.raises(ValidationError):
            background_map(np.zeros((1, 1, 1)), -1.0)


class TestAssembleUnary:
    def test_saturated_foreground(self):
        norm = np.ones((1, 2, 2))
        unary = assemble_unary(norm, 11.0)
        np.testing.assert_array_equal(unary[0], np.zeros((2, 2)))
        np.testing.assert_array_equal(unary[1], np.ones((2, 2)))

    def test_empty_foreground(self):
        norm = np.zeros((1, 2, 2))
        unary = assemble_unary(norm, 11.0)
        np.testing.assert_array_equal(unary[0], np.ones((2, 2)))
        np.testing.assert_array_equal(unary[1], np.zeros((2, 2)))

    def test_mixed_pixel_hand_trace(self):
        # one pixel, two channels 0.5/0.3, alpha 2: bg = (1-0.5)^2 = 0.25
        norm = np.array([[[0.5]], [[0.3]]])
        unary = assemble_unary(norm, 2.0)
        assert unary.shape == (3, 1, 1)
        np.testing.assert_allclose(unary[:, 0, 0], [0.25, 0.5, 0.3])


class TestForegroundValues:
    def test_strictly_above(self):
        vals = foreground_values(np.array([[0.0, 0.5, 1.0]]), 0.05)
        assert sorted(vals.tolist()) == [0.5, 1.0]

    def test_all_below_is_empty(self):
        assert foreground_values(np.array([[0.01, 0.05]]), 0.05).size == 0

    def test_zero_threshold_excludes_zero(self):
        vals = foreground_values(np.array([[0.0, 0.3]]), 0.0)
        assert vals.tolist() == [0.3]


class TestCoefficientOfVariation:
    def test_hand_case(self):
        # {0.5, 1.0}: mu = 0.75, sigma = 0.25, cv = 1/3
        assert coefficient_of_variation(np.array([0.5, 1.0])) == pytest.approx(1 / 3)

    def test_equal_values_give_zero(self):
        assert coefficient_of_variation(np.array([0.4, 0.4, 0.4])) == 0.0

    def test_empty_raises_degenerate(self):
        with pytest.raises(DegenerateChannelError):
            coefficient_of_variation(np.array([]))

    @given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=30),
           st.floats(0.1, 100.0))
    def test_scale_invariance(self, values, k):
        fg = np.array(values)
        assert coefficient_of_variation(k * fg) == pytest.approx(
            coefficient_of_variation(fg), abs=1e-12)


class TestCvsSmooth:
    def test_zero_cv_is_identity(self):
        # all foreground values equal -> cv 0 -> exponent 1
        chan = np.array([[[0.7, 0.7], [0.0, 0.7]]])
        np.testing.assert_array_equal(cvs_smooth(chan), chan)

    def test_hand_exponent(self):
        # exponent 0.5 turns 0.25 into 0.5
        chan = np.array([[[0.25]]])
        out = chan ** channel_exponents(chan)
        np.testing.assert_allclose(cvs_smooth(chan), out)
        forced = np.array([[[0.25]]]) ** 0.5
        np.testing.assert_allclose(forced, [[[0.5]]])

    def test_exponent_floor_clamps(self):
        # huge scale factor drives 1 - s*cv below the floor
        chan = np.array([[[0.1, 0.9, 0.5, 0.2]]])
        exps = channel_exponents(chan, threshold=0.05, scale=100.0,
                                 exponent_floor=0.05)
        assert exps[0] == pytest.approx(0.05)

    def test_degenerate_channel_passes_through(self):
        chan = np.array([[[0.0, 0.01], [0.02, 0.03]]])  # nothing above 0.05
        np.testing.assert_array_equal(cvs_smooth(chan), chan)

    @settings(max_examples=50)
    @given(arrays(np.float64, (1, 4, 5), elements=st.floats(0, 1)))
    def test_pointwise_non_decreasing_and_fixed_points(self, chan):
        out = cvs_smooth(chan)
        assert np.all(out >= chan - 1e-15)
        assert np.all(out[chan == 0.0] == 0.0)
        assert np.all(out[chan == 1.0] == 1.0)

    def test_order_preserving(self, rng):
        chan = rng.uniform(0, 1, (1, 6, 6))
        out = cvs_smooth(chan)
        flat_in, flat_out = chan.ravel(), out.ravel()
        order = np.argsort(flat_in)
        assert np.all(np.diff(flat_out[order]) >= -1e-15)

    def test_parameter_validation(self):
        with pytest.raises(ValidationError):
            channel_exponents(np.zeros((1, 1, 1)), threshold=1.0)
        with pytest.raises(ValidationError):
            channel_exponents(np.zeros((1, 1, 1)), scale=-0.1)
        with pytest.raises(ValidationError):
            channel_exponents(np.zeros((1, 1, 1)), exponent_floor=0.0)


class TestCvsSmootherEstimator:
    def test_params_round_trip(self):
        sm = CvsSmoother(threshold=0.1, scale=0.5, exponent_floor=0.2)
        assert clone(sm).get_params() == sm.get_params()

    def test_transform_matches_function(self, rng):
        chan = rng.uniform(0, 1, (3, 5, 5))
        sm = CvsSmoother(threshold=0.1, scale=0.5)
        np.testing.assert_array_equal(
            sm.fit().transform(chan),
            cvs_smooth(chan, threshold=0.1, scale=0.5))

    def test_fit_validates(self):
        with pytest.raises(ValidationError):
            CvsSmoother(exponent_floor=2.0).fit()
