#!/usr/bin/env python3
# 🧪 合成GV曲线生成器 - 测试用例

import numpy as np
import pytest
from scipy.optimize import brentq

from battery.dataio import coulomb_count, load_dataset, write_dataset
from battery.features import extract_features, voltage_grid
from battery.smoothing import SGConfig, smooth_curve
from battery.synth import (
    PRESETS, FadeSchedule, OCVShape, Plateau, SynthCellSpec, SynthPlan, generate_curve,
    generate_dataset, nasa_like_specs, oxford_like_specs, with_noise,
)

LINEAR = OCVShape(base=3.4, slope=0.8, plateaus=())


class TestOCVShape:
    """伪 OCV 测试"""

    def test_linear_without_plateaus(self):
        soc = np.linspace(0, 1, 11)
        np.testing.assert_allclose(LINEAR.voltage(soc), 3.4 + 0.8 * soc)

    def test_default_increasing(self):
        assert OCVShape().is_increasing()

    def test_too_deep_plateau_rejected(self):
        """平台太陡使 OCV 不再单调，拒绝"""
        shape = OCVShape(plateaus=(Plateau(0.5, 0.5, 0.05),))
        assert not shape.is_increasing()
        with pytest.raises(ValueError):
            SynthCellSpec('A', ocv=shape)

    def test_dict_round_trip(self):
        shape = OCVShape(base=3.0, slope=1.1, plateaus=(Plateau(0.3, 0.05, 0.1),))
        assert OCVShape.from_dict(shape.to_dict()) == shape


class TestFadeSchedule:
    """容量衰减测试"""

    def test_linear_fade(self):
        fade = FadeSchedule(rate=0.01)
        assert fade.multiplier(0) == 1.0
        assert fade.multiplier(10) == pytest.approx(0.9)

    def test_knee(self):
        """knee 之后突降并加速"""
        fade = FadeSchedule(rate=0.003, knee_cycle=40, knee_drop=0.05, knee_rate=0.005)
        before = fade.multiplier(39) - fade.multiplier(40)
        after = fade.multiplier(50) - fade.multiplier(51)
        assert before == pytest.approx(0.053)
        assert after == pytest.approx(0.008)

    def test_explicit_multipliers(self):
        fade = FadeSchedule(multipliers=(1.0, 0.5))
        assert fade.multiplier(1) == 0.5
        with pytest.raises(ValueError):
            fade.multiplier(2)
        with pytest.raises(ValueError):
            FadeSchedule(multipliers=(0.9, 1.0))

    def test_exhausted(self):
        with pytest.raises(ValueError):
            FadeSchedule(rate=0.1).multiplier(10)


class TestGenerateCurve:
    """单条曲线生成测试"""

    def _spec(self, **kwargs):
        values = dict(initial_capacity=1.0, fade=FadeSchedule(rate=0.0), ocv=LINEAR,
                      resistance=0.0, noise_std=0.0)
        values.update(kwargs)
        return SynthCellSpec('A', **values)

    def test_noise_free_linear(self):
        """无平台、无内阻、无噪声: 严格线性，二阶差分为零"""
        curve = generate_curve(self._spec(), 0, 1.0)
        assert curve.duration == pytest.approx(3600.0)
        np.testing.assert_allclose(np.diff(curve.voltage[:-1], 2), 0.0, atol=1e-12)
        assert curve.voltage[0] == pytest.approx(3.4)
        assert curve.voltage[-1] == pytest.approx(4.2)

    def test_half_capacity_halves_duration(self):
        curve = generate_curve(self._spec(fade=FadeSchedule(multipliers=(1.0, 0.5))), 1, 1.0)
        assert curve.duration == pytest.approx(1800.0)

    def test_label_matches_coulomb_count(self):
        spec = self._spec(initial_capacity=0.74)
        assert coulomb_count(generate_curve(spec, 0, 0.74, interval=0.7)) \
            == pytest.approx(0.74, rel=1e-9)

    def test_resistance_shifts_voltage(self):
        """欧姆过电位 I·R 带符号"""
        charge = generate_curve(self._spec(resistance=0.05), 0, 1.0)
        discharge = generate_curve(self._spec(resistance=0.05), 0, -1.0)
        assert charge.voltage[0] == pytest.approx(3.45)
        assert discharge.voltage[0] == pytest.approx(4.15)

    def test_seed_reproducible(self):
        spec = self._spec(noise_std=0.001, seed=5)
        assert generate_curve(spec, 3, 1.0) == generate_curve(spec, 3, 1.0)
        assert generate_curve(spec, 3, 1.0) != generate_curve(spec, 4, 1.0)

    def test_voltage_limits(self):
        with pytest.raises(ValueError):
            generate_curve(self._spec(resistance=0.5), 0, 1.0)

    def test_zero_current(self):
        with pytest.raises(ValueError):
            generate_curve(self._spec(), 0, 0.0)

    def test_analytic_inversion(self):
        """特征提取与 OCV 解析反函数一致"""
        ocv = OCVShape()
        spec = self._spec(ocv=ocv)
        curve = generate_curve(spec, 0, 1.0)
        smoothed = smooth_curve(curve, SGConfig())
        grid = voltage_grid(3.7, 3.9, 4)
        x = extract_features(smoothed, grid, 3.7)

        def time_at(v):
            return 3600.0 * brentq(lambda s: float(ocv.voltage(s)) - v, 0.0, 1.0, xtol=1e-14)

        expected = np.array([time_at(v) for v in grid]) - time_at(3.7)
        np.testing.assert_allclose(x, expected, atol=0.05)
        print("✓ analytic inversion passed")


class TestPresets:
    """数据集预设测试"""

    def test_oxford_shape(self):
        dataset = generate_dataset(oxford_like_specs(), cycles=65, current=0.74)
        assert (dataset.n_cells, dataset.n_samples) == (8, 520)
        assert dataset.cell_ids[0] == 'Cell1'

    def test_oxford_knee_cell(self):
        """第二个电芯在第 40 次后容量突降"""
        dataset = generate_dataset(oxford_like_specs(n_cells=2), cycles=45, current=0.74)
        capacities = np.array(dataset.cell('Cell2').capacities)
        drops = -np.diff(capacities)
        assert np.argmax(drops) == 39
        assert drops[39] > 5 * np.median(drops)

    def test_nasa_shape(self):
        dataset = generate_dataset(nasa_like_specs(), cycles=42, current=-2.0)
        assert (dataset.n_cells, dataset.n_samples) == (20, 840)
        curve = dataset.cells[0].curves[0]
        assert curve.mean_current < 0
        assert curve.voltage[0] > curve.voltage[-1]

    def test_with_noise(self):
        specs = with_noise(oxford_like_specs(n_cells=2), 0.0)
        assert all(s.noise_std == 0.0 for s in specs)

    def test_presets_registered(self):
        assert set(PRESETS) == {'oxford', 'nasa'}


class TestSynthPlan:
    """synth 计划测试"""

    def test_build_preset(self):
        dataset = SynthPlan(preset='nasa', n_cells=2, cycles=3, seed=1).build()
        assert dataset.n_samples == 6
        assert dataset.name == 'synthetic-nasa'

    def test_explicit_cells(self):
        plan = SynthPlan.from_dict({
            'cycles': 2, 'current': 1.0,
            'cells': [{'cell_id': 'X', 'initial_capacity': 1.0, 'noise_std': 0.0,
                       'ocv': {'base': 3.4, 'slope': 0.8, 'plateaus': []}}],
        })
        dataset = plan.build()
        assert dataset.cell_ids == ['X']

    @pytest.mark.parametrize("data", [
        {'noise_std': -0.001}, {'preset': 'lfp'}, {'cycles': 0}, {'colour': 'red'},
    ])
    def test_invalid(self, data):
        with pytest.raises(ValueError):
            SynthPlan.from_dict(data)

    def test_write_read_identical(self, tmp_path):
        """同一计划生成两次，写出的文件逐字节一致"""
        plan = SynthPlan(n_cells=2, cycles=2, seed=9)
        first = write_dataset(plan.build(), tmp_path / 'a')
        second = write_dataset(plan.build(), tmp_path / 'b')
        for path in sorted((tmp_path / 'a').rglob('*.csv')):
            twin = tmp_path / 'b' / path.relative_to(tmp_path / 'a')
            assert path.read_bytes() == twin.read_bytes()
        assert load_dataset(first).n_samples == load_dataset(second).n_samples == 4
