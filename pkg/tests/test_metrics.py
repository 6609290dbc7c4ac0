import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locnoise.attacks import AttackConfig, fgsm_localized
from locnoise.errors import UndefinedChangeError
from locnoise.masks import Mask, build_mask
from locnoise.metrics import (
    attack_success_rate,
    dynamic_range,
    mean_pixel_value,
    metric_set,
    psnr,
    relative_change,
    ssim,
)
from locnoise.net import seeded_random_network
from locnoise.harness import synthetic_images
from locnoise.tensor import Tensor

from oracles import full_mask


def grid(values, shape) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float32).reshape(shape))


class TestMeanPixelValue:
    def test_zeros(self):
        assert mean_pixel_value(Tensor.zeros((3, 3, 3))) == 0.0

    def test_hand_sum(self):
        assert mean_pixel_value(grid([0.1, -0.1, 0.0, 0.0], (2, 2, 1))) == pytest.approx(0.05)

    def test_fgsm_full_mask_equals_epsilon(self):
        net = seeded_random_network((8, 8, 3), 5, 42)
        x = synthetic_images((8, 8, 3), 17, 1)[0]
        out = fgsm_localized(net, x, full_mask(8, 8), AttackConfig.defaults("fgsm"))
        assert np.all(out.noise.data != 0.0)  # no zero-gradient elements here
        assert mean_pixel_value(out.noise) == pytest.approx(0.05, abs=1e-6)

    def test_denominator_is_full_size_not_mask_size(self):
        noise = Tensor(np.zeros((4, 4, 1), dtype=np.float32))
        arr = noise.data.copy()
        arr[1:3, 1:3, 0] = 0.2
        # 4 active elements out of 16: mean over the full grid
        assert mean_pixel_value(Tensor(arr)) == pytest.approx(0.2 * 4 / 16)

    @given(st.floats(min_value=-4.0, max_value=4.0, allow_nan=False))
    @settings(max_examples=40, deadline=None)
    def test_absolute_homogeneity(self, c):
        base = np.linspace(-0.5, 0.5, 12, dtype=np.float32).reshape(2, 2, 3)
        lhs = mean_pixel_value(Tensor(c * base))
        rhs = abs(c) * mean_pixel_value(Tensor(base))
        assert lhs == pytest.approx(rhs, rel=1e-6, abs=1e-9)


class TestPsnr:
    def test_identical_images_hit_cap(self):
        x = Tensor(np.random.default_rng(0).random((5, 5, 3)).astype(np.float32))
        assert psnr(x, x) == 100.0

    def test_uniform_offset_point_one(self):
        x = Tensor.zeros((4, 4, 3))
        y = Tensor.full((4, 4, 3), 0.1)
        assert psnr(x, y) == pytest.approx(20.0, abs=1e-6)

    def test_uniform_offset_point_05(self):
        x = Tensor.full((4, 4, 3), 0.5)
        y = Tensor.full((4, 4, 3), 0.55)
        # MSE = 0.0025, 10 * log10(1 / 0.0025) = 26.0206
        assert psnr(x, y) == pytest.approx(26.0206, abs=0.01)

    def test_strictly_decreasing_in_mse(self):
        x = Tensor.zeros((4, 4, 1))
        values = [
            psnr(x, Tensor.full((4, 4, 1), o)) for o in (0.01, 0.05, 0.1, 0.3, 0.9)
        ]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(Tensor.zeros((2, 2, 1)), Tensor.zeros((2, 2, 3)))


class TestSsim:
    def test_identical_images_exactly_one(self):
        x = Tensor(np.random.default_rng(1).random((6, 6, 3)).astype(np.float32))
        assert ssim(x, x) == 1.0

    def test_constant_zero_vs_constant_one(self):
        x = Tensor.zeros((4, 4, 1))
        y = Tensor.full((4, 4, 1), 1.0)
        c1 = 0.01**2
        assert ssim(x, y) == pytest.approx(c1 / (1 + c1), rel=1e-9)

    def test_symmetric(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            a = Tensor(rng.random((5, 5, 3)).astype(np.float32))
            b = Tensor(rng.random((5, 5, 3)).astype(np.float32))
            assert ssim(a, b) == pytest.approx(ssim(b, a), rel=1e-12)

    def test_bounded(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            a = Tensor(rng.random((5, 5, 1)).astype(np.float32))
            b = Tensor(rng.random((5, 5, 1)).astype(np.float32))
            assert -1.0 <= ssim(a, b) <= 1.0


class TestDynamicRange:
    def test_constant_noise(self):
        assert dynamic_range(Tensor.full((4, 4, 2), 0.3), build_mask(4, 4, 0.5)) == 0.0

    def test_hand_values(self):
        arr = np.zeros((4, 4, 1), dtype=np.float32)
        arr[1, 1, 0] = -0.02
        arr[2, 2, 0] = 0.05
        assert dynamic_range(Tensor(arr), build_mask(4, 4, 0.25)) == pytest.approx(0.07)

    def test_full_mask_equals_plain_extremes(self):
        noise = Tensor(np.random.default_rng(4).standard_normal((5, 5, 3)).astype(np.float32))
        dr = dynamic_range(noise, full_mask(5, 5))
        assert dr == pytest.approx(float(noise.data.max() - noise.data.min()))

    def test_restricted_to_active_region(self):
        arr = np.zeros((4, 4, 1), dtype=np.float32)
        arr[0, 0, 0] = 9.0  # outside the central quarter mask
        assert dynamic_range(Tensor(arr), build_mask(4, 4, 0.25)) == 0.0

    def test_empty_active_region(self):
        m = Mask(bits=np.zeros((4, 4), dtype=np.uint8), gamma_requested=1.0)
        with pytest.raises(ValueError):
            dynamic_range(Tensor.zeros((4, 4, 1)), m)

    def test_translation_invariance(self):
        rng = np.random.default_rng(5)
        noise = rng.standard_normal((6, 6, 2)).astype(np.float32)
        m = build_mask(6, 6, 0.4)
        a = dynamic_range(Tensor(noise), m)
        b = dynamic_range(Tensor(noise + np.float32(0.37)), m)
        assert a == pytest.approx(b, abs=1e-6)


class _FakeOutcome:
    def __init__(self, success):
        self.success = success


class TestAsr:
    def test_three_of_four(self):
        outs = [_FakeOutcome(True), _FakeOutcome(True), _FakeOutcome(True), _FakeOutcome(False)]
        assert attack_success_rate(outs) == 0.75

    def test_all_failures(self):
        assert attack_success_rate([_FakeOutcome(False)] * 5) == 0.0

    def test_table_shape_fraction(self):
        outs = [_FakeOutcome(i < 38) for i in range(50)]
        assert attack_success_rate(outs) == 0.76

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            attack_success_rate([])

    def test_permutation_invariant(self):
        rng = np.random.default_rng(6)
        outs = [_FakeOutcome(bool(rng.integers(2))) for _ in range(20)]
        base = attack_success_rate(outs)
        for _ in range(5):
            rng.shuffle(outs)
            assert attack_success_rate(outs) == base


class TestRelativeChange:
    def test_basic(self):
        assert relative_change(0.04, 0.01) == pytest.approx(-75.0)

    def test_identity(self):
        assert relative_change(3.7, 3.7) == 0.0

    def test_increase(self):
        assert relative_change(1.0, 1.8864) == pytest.approx(88.64)

    def test_zero_baseline(self):
        with pytest.raises(UndefinedChangeError):
            relative_change(0.0, 1.0)


def test_metric_set_bundles_everything():
    net = seeded_random_network((8, 8, 3), 5, 42)
    x = synthetic_images((8, 8, 3), 17, 1)[0]
    mask = build_mask(8, 8, 0.5)
    out = fgsm_localized(net, x, mask, AttackConfig.defaults("fgsm"))
    ms = metric_set(x, out, mask)
    assert ms.mpv == pytest.approx(mean_pixel_value(out.noise))
    assert ms.psnr_db == pytest.approx(psnr(x, out.adversarial_image))
    assert ms.ssim == pytest.approx(ssim(x, out.adversarial_image))
    assert ms.dr == pytest.approx(dynamic_range(out.noise, mask))
    assert ms.mpv >= 0 and ms.dr >= 0 and -1 <= ms.ssim <= 1
