#!/usr/bin/env python3
# 🔋 GV曲线数据导入 - 测试用例

import logging

import numpy as np
import pytest

from battery.dataio import (
    CellRecord, Dataset, Direction, GVCurve, coulomb_count, load_dataset,
    read_curve_csv, read_manifest, write_curve_csv, write_dataset,
)
from battery.errors import DataFormatError, NonGalvanostaticError, NonMonotoneTimeError


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding='utf-8')
    return path


class TestCoulombCount:
    """库仑计数测试"""

    def test_constant_current(self, make_curve):
        """1 A 持续 3600 s 为 1 Ah"""
        curve = make_curve(np.linspace(0.0, 3600.0, 361), np.linspace(3.3, 4.1, 361), current=1.0)
        assert coulomb_count(curve) == pytest.approx(1.0, rel=1e-12)

    def test_discharge_uses_magnitude(self, make_curve):
        """放电电流取绝对值"""
        curve = make_curve(np.linspace(0.0, 1800.0, 181), np.linspace(4.1, 3.3, 181), current=-2.0)
        assert coulomb_count(curve) == pytest.approx(1.0, rel=1e-12)

    def test_piecewise_current(self):
        """分段电流: 前半小时 1 A，后半小时 0.5 A，共 0.75 Ah"""
        time = np.concatenate([np.linspace(0.0, 1800.0, 1801), np.linspace(1800.001, 3600.0, 1800)])
        current = np.where(time <= 1800.0, 1.0, 0.5)
        curve = GVCurve('A', 'c0', time, np.linspace(3.3, 4.1, len(time)), current)
        assert coulomb_count(curve) == pytest.approx(0.75, rel=1e-6)
        print("✓ piecewise coulomb count passed")

    def _drifting(self):
        rng = np.random.default_rng(4)
        time = np.cumsum(rng.uniform(0.5, 2.0, 400))
        current = 0.74 + 0.002 * np.sin(time / 50.0)
        return time, np.linspace(3.4, 4.0, len(time)), current

    def test_collinear_refinement(self):
        """在相邻采样点之间线性插入新点，库仑计数不变"""
        time, voltage, current = self._drifting()
        mid = 0.5 * (time[:-1] + time[1:])
        fine_time = np.sort(np.concatenate([time, mid]))
        fine = GVCurve('A', 'c0', fine_time, np.interp(fine_time, time, voltage),
                       np.interp(fine_time, time, current))
        coarse = GVCurve('A', 'c0', time, voltage, current)
        assert coulomb_count(fine) == pytest.approx(coulomb_count(coarse), rel=1e-12)

    def test_scales_with_current_magnitude(self):
        """|I| 放大 k 倍，容量放大 k 倍（符号不影响）"""
        time, voltage, current = self._drifting()
        base = coulomb_count(GVCurve('A', 'c0', time, voltage, current))
        for k in (0.5, 3.0, -2.0):
            scaled = GVCurve('A', 'c0', time, voltage, k * current)
            assert coulomb_count(scaled) == pytest.approx(abs(k) * base, rel=1e-12)


class TestGVCurve:
    """GVCurve 数据类测试"""

    def test_direction_from_current_sign(self, make_curve):
        time = np.arange(10.0)
        assert make_curve(time, time * 0.01 + 3.5, current=0.5).direction is Direction.CHARGE
        assert make_curve(time, 3.9 - time * 0.01, current=-0.5).direction is Direction.DISCHARGE

    def test_arrays_read_only(self, make_curve):
        """曲线创建后不可修改"""
        curve = make_curve(np.arange(5.0), np.linspace(3.5, 3.6, 5))
        with pytest.raises(ValueError):
            curve.voltage[0] = 0.0

    def test_rejects_unsorted_time(self):
        with pytest.raises(ValueError):
            GVCurve('A', 'c0', [0.0, 2.0, 1.0], [3.5, 3.6, 3.7], [1.0, 1.0, 1.0])

    def test_galvanostatic_check(self, make_curve):
        """电流变异系数 ≥ 1% 时拒绝"""
        time = np.arange(100.0)
        current = np.where(time < 50, 1.0, 1.2)
        curve = make_curve(time, 3.5 + 0.001 * time, current=current)
        with pytest.raises(NonGalvanostaticError) as info:
            curve.check_galvanostatic()
        assert info.value.curve_id == 'c0'

    def test_direction_parse(self):
        assert Direction.parse(' Charge ') is Direction.CHARGE
        assert Direction.DISCHARGE.sign == -1.0
        with pytest.raises(ValueError):
            Direction.parse('rest')


class TestReadCurveCSV:
    """曲线 CSV 读取测试"""

    def test_basic_read(self, tmp_path):
        path = _write(tmp_path / 'c.csv',
                      "time_s,voltage_v,current_a\n10,3.50,0.74\n11,3.51,0.74\n12,3.52,0.74\n")
        curve = read_curve_csv(path, 'A', 'c1')
        np.testing.assert_array_equal(curve.time, [0.0, 1.0, 2.0])
        np.testing.assert_array_equal(curve.voltage, [3.50, 3.51, 3.52])
        assert curve.temperature_c is None

    def test_temperature_column_kept(self, tmp_path):
        path = _write(tmp_path / 'c.csv',
                      "time_s,voltage_v,current_a,temperature_c\n0,3.5,1,25\n1,3.6,1,25.5\n")
        curve = read_curve_csv(path)
        np.testing.assert_array_equal(curve.temperature_c, [25.0, 25.5])

    def test_missing_column(self, tmp_path):
        path = _write(tmp_path / 'c.csv', "time_s,voltage_v\n0,3.5\n1,3.6\n")
        with pytest.raises(DataFormatError) as info:
            read_curve_csv(path)
        assert 'current_a' in str(info.value)

    def test_malformed_row_reports_line(self, tmp_path):
        """非数字字段报告文件行号"""
        path = _write(tmp_path / 'c.csv',
                      "time_s,voltage_v,current_a\n0,3.5,1\n1,abc,1\n2,3.7,1\n")
        with pytest.raises(DataFormatError) as info:
            read_curve_csv(path)
        assert info.value.indices == [3]

    def test_duplicate_timestamps_collapsed(self, tmp_path, caplog):
        """重复时间戳保留第一行并告警"""
        path = _write(tmp_path / 'c.csv',
                      "time_s,voltage_v,current_a\n0,3.50,1\n1,3.51,1\n1,3.99,1\n2,3.52,1\n")
        with caplog.at_level(logging.WARNING, logger='battery.dataio'):
            curve = read_curve_csv(path)
        np.testing.assert_array_equal(curve.voltage, [3.50, 3.51, 3.52])
        assert 'duplicated timestamp' in caplog.text

    def test_backwards_time_rejected(self, tmp_path):
        path = _write(tmp_path / 'c.csv',
                      "time_s,voltage_v,current_a\n0,3.50,1\n2,3.51,1\n1,3.52,1\n")
        with pytest.raises(NonMonotoneTimeError) as info:
            read_curve_csv(path)
        assert info.value.indices == [2]

    def test_empty_curve(self, tmp_path):
        path = _write(tmp_path / 'c.csv', "time_s,voltage_v,current_a\n")
        with pytest.raises(DataFormatError):
            read_curve_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_curve_csv(tmp_path / 'nope.csv')


class TestManifest:
    """manifest 与数据集加载测试"""

    def _dataset_dir(self, tmp_path):
        body = "time_s,voltage_v,current_a\n" + "".join(
            f"{t},{3.5 + 0.001 * t:.4f},1.0\n" for t in range(0, 3601, 10))
        _write(tmp_path / 'a1.csv', body)
        _write(tmp_path / 'a2.csv', body)
        _write(tmp_path / 'b1.csv', body)
        _write(tmp_path / 'bad.csv', "time_s,voltage_v,current_a\n0,3.5,1\n5,3.6,1\n3,3.7,1\n")
        return _write(tmp_path / 'manifest.txt',
                      "# cell,curve,path,capacity\n"
                      "A,1,a1.csv,0.9\n"
                      "A,2,a2.csv\n"
                      "\n"
                      "B,1,b1.csv,0.8\n"
                      "B,2,bad.csv,0.8\n")

    def test_load_groups_by_cell(self, tmp_path):
        dataset = load_dataset(self._dataset_dir(tmp_path))
        assert dataset.cell_ids == ['A', 'B']
        assert dataset.n_samples == 3
        assert dataset.cell('A').capacities[0] == 0.9

    def test_missing_capacity_uses_coulomb_count(self, tmp_path):
        """capacity_ah 缺省时对整条曲线库仑计数"""
        dataset = load_dataset(self._dataset_dir(tmp_path))
        assert dataset.cell('A').capacities[1] == pytest.approx(1.0, rel=1e-12)

    def test_rejected_curves_recorded(self, tmp_path):
        """时间倒退的曲线被拒收并记录，其余继续加载"""
        dataset = load_dataset(self._dataset_dir(tmp_path))
        assert [(cell, curve) for cell, curve, _ in dataset.rejected] == [('B', '2')]

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / 'manifest.txt')

    def test_duplicate_entries(self, tmp_path):
        path = _write(tmp_path / 'manifest.txt', "A,1,a.csv,1\nA,1,b.csv,1\n")
        with pytest.raises(DataFormatError):
            read_manifest(path)

    def test_duplicate_cell_ids_rejected(self, make_curve):
        curve = make_curve(np.arange(3.0), [3.5, 3.6, 3.7])
        cell = CellRecord('A', (curve,), (1.0,))
        with pytest.raises(ValueError):
            Dataset(cells=(cell, cell))


class TestRoundTrip:
    """写出再读回测试"""

    def test_curve_bitwise(self, tmp_path, make_curve):
        """最短往返浮点表示，读回逐位一致"""
        rng = np.random.default_rng(0)
        time = np.cumsum(rng.uniform(0.5, 1.5, 200))
        time -= time[0]
        curve = make_curve(time, 3.5 + rng.normal(0, 0.01, 200), current=0.74)
        loaded = read_curve_csv(write_curve_csv(curve, tmp_path / 'c.csv'), 'A', 'c0')
        assert loaded == curve

    def test_dataset(self, tmp_path, pair_dataset):
        manifest = write_dataset(pair_dataset, tmp_path / 'data')
        loaded = load_dataset(manifest)
        assert loaded.cell_ids == pair_dataset.cell_ids
        for original, reread in zip(pair_dataset.cells, loaded.cells):
            assert original.curves == reread.curves
            assert original.capacities == reread.capacities
        print("✓ dataset round trip passed")
