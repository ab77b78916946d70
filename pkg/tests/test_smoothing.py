#!/usr/bin/env python3
# 〰️ Savitzky-Golay 平滑 - 测试用例

import numpy as np
import pytest

from battery.smoothing import (
    SGConfig, SmoothedCurve, clamp_window, resample_uniform, savitzky_golay, sg_smooth,
    smooth_curve,
)


class TestSGConfig:
    """SG 参数校验测试"""

    def test_defaults(self):
        config = SGConfig()
        assert (config.window_length, config.polyorder, config.resample_interval) == (25, 3, 1.0)

    @pytest.mark.parametrize("window, order", [(24, 3), (3, 3), (5, -1)])
    def test_invalid(self, window, order):
        with pytest.raises(ValueError):
            SGConfig(window_length=window, polyorder=order)

    def test_dict_round_trip(self):
        config = SGConfig(window_length=31, polyorder=4, resample_interval=2.0)
        assert SGConfig.from_dict(config.to_dict()) == config


class TestPolynomialExactness:
    """次数 ≤ p 的多项式经 SG 平滑后不变（含边界）"""

    @pytest.mark.parametrize("order, window", [(2, 11), (3, 25), (4, 31)])
    def test_polynomial_preserved(self, order, window):
        rng = np.random.default_rng(order)
        x = np.linspace(0.0, 1.0, 200)
        coefficients = rng.normal(size=order + 1)
        values = np.polyval(coefficients, x)
        smoothed = savitzky_golay(values, window, order)
        assert np.max(np.abs(smoothed - values)) < 1e-10
        print(f"✓ order {order} window {window} passed")

    def test_length_preserved(self):
        values = np.random.default_rng(0).normal(size=101)
        assert len(savitzky_golay(values, 25, 3)) == 101

    def test_shorter_than_window(self):
        with pytest.raises(ValueError):
            savitzky_golay(np.arange(10.0), 25, 3)

    def test_noise_reduced(self):
        """白噪声方差明显下降"""
        rng = np.random.default_rng(1)
        noise = rng.normal(0.0, 1.0, 5000)
        assert np.std(savitzky_golay(noise, 25, 3)) < 0.6 * np.std(noise)

    def test_linear_operator(self):
        """sg(a·u + b·v) = a·sg(u) + b·sg(v)"""
        rng = np.random.default_rng(5)
        u, v = rng.normal(size=300), rng.normal(size=300)
        a, b = 2.5, -0.7
        combined = savitzky_golay(a * u + b * v, 25, 3)
        separate = a * savitzky_golay(u, 25, 3) + b * savitzky_golay(v, 25, 3)
        assert np.max(np.abs(combined - separate)) < 1e-12

    def test_bitwise_deterministic(self, make_curve):
        """同一输入两次平滑逐位相同"""
        rng = np.random.default_rng(6)
        time = np.sort(rng.uniform(0.0, 900.0, 700))
        curve = make_curve(time, 3.4 + 0.0003 * time + rng.normal(0.0, 0.001, 700))
        first, second = smooth_curve(curve, SGConfig()), smooth_curve(curve, SGConfig())
        assert np.array_equal(first.voltage, second.voltage)
        assert np.array_equal(first.time, second.time)


class TestResample:
    """均匀网格重采样测试"""

    def test_grid_not_extrapolated(self, make_curve):
        curve = make_curve([0.0, 0.7, 2.1, 3.5], [3.50, 3.57, 3.71, 3.85])
        uniform = resample_uniform(curve, 1.0)
        np.testing.assert_array_equal(uniform.time, [0.0, 1.0, 2.0, 3.0])
        np.testing.assert_allclose(uniform.voltage, [3.50, 3.60, 3.70, 3.80], atol=1e-12)

    def test_source_and_current(self, make_curve):
        curve = make_curve(np.arange(10.0), np.linspace(3.5, 3.6, 10), current=-2.0,
                           cell_id='RW1', curve_id='k7')
        uniform = resample_uniform(curve, 2.0)
        assert uniform.source_id == 'RW1/k7'
        assert uniform.current == -2.0
        assert uniform.interval == 2.0

    def test_too_short(self, make_curve):
        with pytest.raises(ValueError):
            resample_uniform(make_curve([0.0, 1.5], [3.5, 3.6]), 1.0)

    def test_spacing_enforced(self):
        with pytest.raises(ValueError):
            SmoothedCurve(time=[0.0, 1.0, 2.5], voltage=[3.5, 3.6, 3.7], interval=1.0)


class TestSmoothCurve:
    """重采样 + 平滑组合测试"""

    def test_linear_ramp_unchanged(self, make_curve):
        time = np.arange(0.0, 300.0, 0.5)
        curve = make_curve(time, 3.3 + 0.001 * time)
        smoothed = smooth_curve(curve, SGConfig())
        np.testing.assert_allclose(smoothed.voltage, 3.3 + 0.001 * smoothed.time, atol=1e-12)
        assert smoothed.window_length == 25

    def test_clamp_for_short_segment(self, make_curve):
        """短片段窗口缩到最大奇数"""
        time = np.arange(20.0)
        smoothed = smooth_curve(make_curve(time, 3.5 + 0.001 * time), SGConfig(), clamp=True)
        assert smoothed.window_length == 19

    def test_clamp_window(self):
        config = SGConfig(window_length=25, polyorder=3)
        assert clamp_window(config, 100) is config
        assert clamp_window(config, 12).window_length == 11
        with pytest.raises(ValueError):
            clamp_window(config, 4)

    def test_without_clamp_short_fails(self, make_curve):
        time = np.arange(20.0)
        with pytest.raises(ValueError):
            smooth_curve(make_curve(time, 3.5 + 0.001 * time), SGConfig())

    def test_sg_smooth_keeps_grid(self):
        curve = SmoothedCurve(time=np.arange(50.0), voltage=np.linspace(3.5, 3.6, 50))
        smoothed = sg_smooth(curve, SGConfig(window_length=11, polyorder=2))
        np.testing.assert_array_equal(smoothed.time, curve.time)
        assert smoothed.window_length == 11
