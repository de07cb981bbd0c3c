import numpy as np
import pytest

from flarekit.color import rgb_to_hsv
from flarekit.luts import (
    CIRCULAR,
    LINEAR,
    Lut1D,
    LutBank,
    LutSet,
    apply_lut,
    correct_hsv,
    identity_bank,
    identity_lut,
    residual_fuse,
)


def random_hsv(rng, shape=(16, 16)):
    h = rng.uniform(0, 360, size=shape)
    s = rng.random(shape)
    v = rng.random(shape)
    return np.stack([h, s, v], axis=-1)


class TestIdentityLut:
    def test_linear_two_points(self):
        lut = identity_lut(2, LINEAR)
        assert np.allclose(lut.values, [0.0, 1.0])

    def test_apply_identity_linear(self, rng):
        lut = identity_lut(33, LINEAR)
        x = rng.random((20, 20))
        assert np.abs(apply_lut(x, lut) - x).max() < 1e-6

    def test_apply_identity_circular(self, rng):
        lut = identity_lut(33, CIRCULAR)
        x = rng.random((20, 20))  # hue fractions
        out = apply_lut(x, lut)
        err = np.abs(out - x)
        err = np.minimum(err, 1.0 - err) * 360.0
        assert err.max() < 1e-5

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            identity_lut(1, LINEAR)


class TestApplyLut:
    def test_constant_lut(self, rng):
        lut = Lut1D(np.full(9, 0.42), LINEAR)
        assert np.allclose(apply_lut(rng.random((5, 5)), lut), 0.42)

    def test_two_point_interpolation(self):
        lut = Lut1D(np.array([0.0, 0.5]), LINEAR)
        assert apply_lut(np.array([[0.5]]), lut)[0, 0] == pytest.approx(0.25)

    def test_input_clamping(self):
        lut = identity_lut(5, LINEAR)
        assert apply_lut(np.array([[-0.3]]), lut)[0, 0] == 0.0
        assert apply_lut(np.array([[1.7]]), lut)[0, 0] == 1.0

    def test_output_clamped(self):
        lut = Lut1D(np.array([-0.5, 1.5]), LINEAR)
        out = apply_lut(np.linspace(0, 1, 11).reshape(1, -1), lut)
        assert (out >= 0).all() and (out <= 1).all()

    def test_monotone_in_control_points(self, rng):
        x = rng.random((12, 12))
        vals = rng.random(7)
        base = apply_lut(x, Lut1D(vals.copy(), LINEAR))
        for k in range(7):
            raised = vals.copy()
            raised[k] += 0.2
            out = apply_lut(x, Lut1D(raised, LINEAR))
            assert (out >= base - 1e-12).all()

    def test_circular_wraps_across_seam(self):
        # identity over the top segment relies on shortest-arc interpolation
        lut = identity_lut(4, CIRCULAR)
        assert apply_lut(np.array([[0.9]]), lut)[0, 0] == pytest.approx(0.9)

    def test_circular_output_wrapped(self, rng):
        lut = Lut1D(rng.random(9) * 3.0, CIRCULAR)  # values outside [0,1)
        out = apply_lut(rng.random((6, 6)), lut)
        assert (out >= 0).all() and (out < 1).all()


class TestCorrectHsv:
    def test_identity_fixed_point(self, rng):
        hsv = random_hsv(rng)
        w = rng.random(4)
        w /= w.sum()
        bank = identity_bank(4, 17)
        bank.weights = w
        out = correct_hsv(hsv, bank)
        herr = np.abs(out[..., 0] - hsv[..., 0])
        herr = np.minimum(herr, 360 - herr)
        assert herr.max() < 1e-5
        assert np.abs(out[..., 1:] - hsv[..., 1:]).max() < 1e-5

    def test_single_set_equals_apply(self, rng):
        hsv = random_hsv(rng)
        lut_h = Lut1D(rng.random(9), CIRCULAR)
        lut_s = Lut1D(np.sort(rng.random(9)), LINEAR)
        lut_v = Lut1D(np.sort(rng.random(9)), LINEAR)
        bank = LutBank([LutSet(lut_h, lut_s, lut_v)], np.array([1.0]))
        out = correct_hsv(hsv, bank)
        assert np.allclose(out[..., 1], apply_lut(hsv[..., 1], lut_s))
        assert np.allclose(out[..., 2], apply_lut(hsv[..., 2], lut_v))
        expected_h = apply_lut(hsv[..., 0] / 360.0, lut_h) * 360.0
        herr = np.abs(out[..., 0] - expected_h)
        herr = np.minimum(herr, 360 - herr)
        assert herr.max() < 1e-9

    def test_constant_value_fusion(self, rng):
        hsv = random_hsv(rng)
        s1 = LutSet(identity_lut(5, CIRCULAR), identity_lut(5), Lut1D(np.full(5, 0.2), LINEAR))
        s2 = LutSet(identity_lut(5, CIRCULAR), identity_lut(5), Lut1D(np.full(5, 0.6), LINEAR))
        bank = LutBank([s1, s2], np.array([0.5, 0.5]))
        out = correct_hsv(hsv, bank)
        assert np.allclose(out[..., 2], 0.4)

    def test_fusion_within_per_set_bounds(self, rng):
        hsv = random_hsv(rng)
        sets = [
            LutSet(identity_lut(7, CIRCULAR), Lut1D(rng.random(7), LINEAR), Lut1D(rng.random(7), LINEAR))
            for _ in range(3)
        ]
        w = rng.random(3)
        w /= w.sum()
        bank = LutBank(sets, w)
        out = correct_hsv(hsv, bank)
        s_all = np.stack([apply_lut(hsv[..., 1], ls.s) for ls in sets])
        v_all = np.stack([apply_lut(hsv[..., 2], ls.v) for ls in sets])
        assert (out[..., 1] >= s_all.min(axis=0) - 1e-12).all()
        assert (out[..., 1] <= s_all.max(axis=0) + 1e-12).all()
        assert (out[..., 2] >= v_all.min(axis=0) - 1e-12).all()
        assert (out[..., 2] <= v_all.max(axis=0) + 1e-12).all()

    def test_output_is_valid_hsv(self, rng):
        hsv = random_hsv(rng)
        sets = [
            LutSet(Lut1D(rng.random(9), CIRCULAR), Lut1D(rng.random(9), LINEAR), Lut1D(rng.random(9), LINEAR))
            for _ in range(2)
        ]
        bank = LutBank(sets, np.array([0.3, 0.7]))
        out = correct_hsv(hsv, bank)
        assert (out[..., 0] >= 0).all() and (out[..., 0] < 360).all()
        assert (out[..., 1:] >= 0).all() and (out[..., 1:] <= 1).all()

    def test_hue_circular_mean_across_seam(self):
        # two constant hue outputs at 350 and 10 degrees average to 0, not 180
        hsv = np.stack([np.full((4, 4), 100.0), np.ones((4, 4)), np.ones((4, 4))], axis=-1)
        s1 = LutSet(Lut1D(np.full(5, 350 / 360), CIRCULAR), identity_lut(5), identity_lut(5))
        s2 = LutSet(Lut1D(np.full(5, 10 / 360), CIRCULAR), identity_lut(5), identity_lut(5))
        bank = LutBank([s1, s2], np.array([0.5, 0.5]))
        out = correct_hsv(hsv, bank)
        herr = np.minimum(out[..., 0], 360 - out[..., 0])
        assert herr.max() < 1e-9


class TestLutBank:
    def test_validate_rejects_bad_weights(self):
        bank = identity_bank(2, 5)
        bank.weights = np.array([0.6, 0.6])
        with pytest.raises(ValueError):
            bank.validate()
        bank.weights = np.array([-0.1, 1.1])
        with pytest.raises(ValueError):
            bank.validate()

    def test_json_round_trip(self, rng):
        sets = [
            LutSet(Lut1D(rng.random(7), CIRCULAR), Lut1D(rng.random(7), LINEAR), Lut1D(rng.random(7), LINEAR))
            for _ in range(3)
        ]
        w = rng.random(3)
        w /= w.sum()
        bank = LutBank(sets, w)
        restored = LutBank.from_json(bank.to_json())
        assert np.array_equal(restored.weights, bank.weights)
        for a, b in zip(restored.sets, bank.sets):
            assert np.array_equal(a.h.values, b.h.values)
            assert np.array_equal(a.s.values, b.s.values)
            assert np.array_equal(a.v.values, b.v.values)
            assert a.h.domain == CIRCULAR and a.s.domain == LINEAR


class TestResidualFuse:
    def test_zero_weights_identity(self, rng):
        original = rng.random((8, 8, 3))
        fused = rng.random((8, 8, 3))
        out = residual_fuse(fused, original, original, np.zeros((3, 6)))
        assert np.array_equal(out, original)

    def test_pass_through_weights(self, rng):
        # weight 1 on each fused channel, 0 on residual: clamp(fused + original)
        original = rng.random((6, 6, 3))
        fused = rng.random((6, 6, 3))
        residual = rng.random((6, 6, 3))
        weight = np.hstack([np.eye(3), np.zeros((3, 3))])
        out = residual_fuse(fused, residual, original, weight)
        assert np.allclose(out, np.clip(fused + original, 0, 1))

    def test_linear_map_oracle(self, rng):
        original = rng.random((5, 5, 3))
        fused = rng.random((5, 5, 3))
        residual = rng.random((5, 5, 3))
        weight = rng.normal(size=(3, 6))
        bias = rng.normal(size=3) * 0.1
        out = residual_fuse(fused, residual, original, weight, bias)
        concat = np.concatenate([fused, residual], axis=-1)
        expect = np.clip(concat @ weight.T + bias + original, 0, 1)
        assert np.allclose(out, expect)

    def test_clamp_property(self, rng):
        out = residual_fuse(
            rng.random((4, 4, 3)),
            rng.random((4, 4, 3)),
            rng.random((4, 4, 3)),
            rng.normal(size=(3, 6)) * 5,
            rng.normal(size=3),
        )
        assert (out >= 0).all() and (out <= 1).all()

    def test_shape_mismatch_errors(self, rng):
        img = rng.random((4, 4, 3))
        with pytest.raises(ValueError):
            residual_fuse(img, img, img, np.zeros((3, 5)))
        with pytest.raises(ValueError):
            residual_fuse(img, img, rng.random((5, 4, 3)), np.zeros((3, 6)))


class TestRoundTripThroughRgb:
    def test_identity_bank_preserves_image(self, rng):
        img = rng.random((32, 32, 3))
        hsv = rgb_to_hsv(img)
        out = correct_hsv(hsv, identity_bank(3, 33))
        from flarekit.color import hsv_to_rgb

        assert np.abs(hsv_to_rgb(out) - img).max() < 1e-5
