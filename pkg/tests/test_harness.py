#!/usr/bin/env python3
# 🔁 留一电芯交叉验证 - 测试用例

import math

import numpy as np
import pandas as pd
import pytest

from battery.dataio import CellRecord, Dataset, Direction
from battery.features import ExtractionConfig
from battery.synth import FadeSchedule, OCVShape, SynthCellSpec, generate_dataset, oxford_like_specs
from evaluation.harness import (
    METHOD_ICDV, EvaluationReport, FoldResult, fold_seed, infer_direction, leave_one_cell_out,
    leave_one_cell_out_icdv, quantise_top, run_parallel,
)
from evaluation.report_exporter import ReportExporter, n_sweep_frame, sweep_frame
from evaluation.sweep import DEFAULT_GRID, SweepPoint, compare_baseline, numbered, sweep
from gpr.regression import GPConfig

DESK_EXTRACTION = ExtractionConfig(v_l=3.5, delta_t=450.0)
QUICK_GP = GPConfig(restarts=2)


@pytest.fixture(scope='module')
def desk_report(desk_dataset):
    return leave_one_cell_out(desk_dataset, DESK_EXTRACTION, gp=GPConfig(restarts=3))


class TestHelpers:
    """工具函数测试"""

    def test_quantise_truncates_toward_v_l(self):
        assert quantise_top(3.5, 3.5237) == 3.523
        assert quantise_top(3.7, 3.6126) == 3.613

    def test_quantise_keeps_tiny_interval(self):
        assert quantise_top(3.5, 3.5004) == 3.5004

    def test_fold_seed(self):
        assert fold_seed(0, 1) == fold_seed(0, 1)
        assert fold_seed(0, 1) != fold_seed(0, 2)

    def test_run_parallel_keeps_order(self):
        assert run_parallel(lambda v: v * v, range(10), jobs=4) == [v * v for v in range(10)]

    def test_infer_direction(self, pair_dataset):
        assert infer_direction(pair_dataset) is Direction.CHARGE

    def test_empty_report(self):
        report = EvaluationReport('x', 'gp-ice', [FoldResult('A', error='boom')], {})
        assert math.isnan(report.overall_rmspe)
        assert len(report.failed_folds) == 1


class TestLeaveOneCellOut:
    """GP-ICE 留一电芯评估测试"""

    def test_two_cells_train_on_the_other(self, pair_dataset):
        report = leave_one_cell_out(pair_dataset, DESK_EXTRACTION, gp=QUICK_GP)
        folds = {fold.test_cell_id: fold for fold in report.folds}
        assert folds['Cell1'].train_cell_ids == ('Cell2',)
        assert folds['Cell2'].train_cell_ids == ('Cell1',)
        assert all(p.cell_id == fold.test_cell_id
                   for fold in report.folds for p in fold.predictions)
        report.assert_no_leakage()

    def test_short_curve_only_skips_itself(self, pair_dataset, make_curve):
        """某条曲线短于 SG 窗口时只跳过这条曲线"""
        stub = np.arange(0.0, 10.0)
        first, second = pair_dataset.cells
        short = make_curve(stub, 3.4 + 0.001 * stub, current=0.74,
                           cell_id=first.cell_id, curve_id='stub')
        padded = CellRecord(first.cell_id, first.curves + (short,),
                            first.capacities + (0.002,))
        dataset = Dataset(cells=(padded, second), name='padded')
        report = leave_one_cell_out(dataset, DESK_EXTRACTION, gp=QUICK_GP)
        assert not report.failed_folds
        plain = leave_one_cell_out(pair_dataset, DESK_EXTRACTION, gp=QUICK_GP)
        assert len(report.predictions) == len(plain.predictions)
        skipped = {fold.test_cell_id: fold.skipped for fold in report.folds}
        assert [curve_id for curve_id, _ in skipped[first.cell_id]] == ['stub']

    def test_desk_scale_accuracy(self, desk_report, desk_dataset):
        """桌面规模: 每条曲线都有预测，RMSPE 在 2% 以内"""
        assert len(desk_report.predictions) == desk_dataset.n_samples
        assert desk_report.overall_rmspe < 2.0
        assert all(p.sigma > 0 for p in desk_report.predictions)
        print(f"✓ desk RMSPE {desk_report.overall_rmspe:.3f}%, CS_2σ {desk_report.cs_2:.3f}")

    def test_pooled_rmspe(self, desk_report):
        """总 RMSPE 由全部预测合并计算"""
        pooled = np.sqrt(np.mean([((p.yhat - p.y) / p.y) ** 2 for p in desk_report.predictions]))
        assert desk_report.overall_rmspe == pytest.approx(100 * pooled)
        assert set(desk_report.per_cell_rmspe) == set(desk_report.folds[0].train_cell_ids) | {
            desk_report.folds[0].test_cell_id}

    def test_quantised_grid_tops(self, desk_report):
        for p in desk_report.predictions:
            assert p.v_h == pytest.approx(round(p.v_h, 3), abs=1e-12)
            assert p.v_h > 3.5

    def test_deterministic(self, desk_dataset, desk_report):
        again = leave_one_cell_out(desk_dataset, DESK_EXTRACTION, gp=GPConfig(restarts=3))
        assert [(p.curve_id, p.yhat, p.sigma) for p in again.predictions] \
            == [(p.curve_id, p.yhat, p.sigma) for p in desk_report.predictions]

    def test_cache_and_threads_do_not_change_results(self, pair_dataset):
        """缓存与并行只影响速度"""
        reference = leave_one_cell_out(pair_dataset, DESK_EXTRACTION, gp=QUICK_GP)
        uncached = leave_one_cell_out(pair_dataset, DESK_EXTRACTION, gp=QUICK_GP,
                                      use_cache=False)
        threaded = leave_one_cell_out(pair_dataset, DESK_EXTRACTION, gp=QUICK_GP, jobs=2)
        expected = [(p.curve_id, p.yhat, p.sigma) for p in reference.predictions]
        assert [(p.curve_id, p.yhat, p.sigma) for p in uncached.predictions] == expected
        assert [(p.curve_id, p.yhat, p.sigma) for p in threaded.predictions] == expected

    def test_refit_per_grid(self, pair_dataset):
        report = leave_one_cell_out(pair_dataset, DESK_EXTRACTION, gp=QUICK_GP, refit='grid')
        sources = {h.source for fold in report.folds for h in fold.hyperparams}
        assert sources == {'fit', 'refit'}
        assert len(report.predictions) == pair_dataset.n_samples

    def test_fixed_v_h(self, pair_dataset):
        """给定 v_h: 所有样本共用一个网格"""
        report = leave_one_cell_out(pair_dataset, ExtractionConfig(v_l=3.7, v_h=3.8),
                                    gp=QUICK_GP)
        assert {p.v_h for p in report.predictions} == {3.8}

    def test_wrong_direction(self, pair_dataset):
        with pytest.raises(ValueError):
            leave_one_cell_out(pair_dataset, ExtractionConfig(v_l=3.7, v_h=3.6))

    def test_single_cell(self, pair_dataset):
        with pytest.raises(ValueError):
            leave_one_cell_out(Dataset(cells=pair_dataset.cells[:1]), DESK_EXTRACTION)

    def test_failing_fold(self):
        """一个电芯的曲线太短: keep_going 记录错误，否则报错"""
        specs = oxford_like_specs(n_cells=2, seed=3) + [
            SynthCellSpec('Tiny', initial_capacity=0.3, seed=99)]
        dataset = generate_dataset(specs, cycles=3, current=0.74)
        extraction = ExtractionConfig(v_l=3.5, delta_t=1450.0)
        with pytest.raises(ValueError):
            leave_one_cell_out(dataset, extraction, gp=QUICK_GP)
        report = leave_one_cell_out(dataset, extraction, gp=QUICK_GP, keep_going=True)
        failed = [fold.test_cell_id for fold in report.failed_folds]
        assert failed == ['Tiny']
        assert len(report.predictions) == 6


class TestICDVBaseline:
    """IC+DV 基线测试"""

    def test_runs_on_pair(self, pair_dataset):
        report = leave_one_cell_out_icdv(pair_dataset, gp=QUICK_GP)
        assert report.method == METHOD_ICDV
        assert len(report.predictions) == pair_dataset.n_samples
        assert all(METHOD_ICDV in fold.excluded for fold in report.folds)
        report.assert_no_leakage()

    def test_gp_ice_beats_featureless_peaks(self):
        """线性 OCV: IC/DV 曲线没有真正的峰，容量只体现在片段时长上"""
        rng = np.random.default_rng(12)
        specs = [SynthCellSpec(f"L{i}", initial_capacity=0.74 * rng.uniform(0.95, 1.05),
                               fade=FadeSchedule(rate=0.01),
                               ocv=OCVShape(base=3.40, slope=0.85, plateaus=()),
                               seed=i) for i in range(4)]
        dataset = generate_dataset(specs, cycles=10, current=0.74)
        gp_ice = leave_one_cell_out(dataset, ExtractionConfig(v_l=3.7, delta_t=450.0),
                                    gp=QUICK_GP)
        icdv = leave_one_cell_out_icdv(dataset, gp=QUICK_GP)
        assert gp_ice.overall_rmspe < icdv.overall_rmspe
        print(f"✓ GP-ICE {gp_ice.overall_rmspe:.3f}% vs IC+DV {icdv.overall_rmspe:.3f}%")


class TestSweep:
    """参数扫描测试"""

    def test_default_grid(self):
        assert [(p.index, p.delta_t, p.v_l) for p in DEFAULT_GRID] == [
            (1, 10.0, 3.5), (2, 450.0, 3.5), (3, 1450.0, 3.5),
            (4, 10.0, 3.7), (5, 450.0, 3.7), (6, 1450.0, 3.7)]
        assert DEFAULT_GRID[0].label == 'GP-ICE 1'

    def test_numbered(self):
        points = numbered([SweepPoint(10.0, 3.5), SweepPoint(20.0, 3.5)])
        assert [p.index for p in points] == [1, 2]

    def test_empty_grid(self, pair_dataset):
        with pytest.raises(ValueError):
            sweep(pair_dataset, grid=[])

    def test_failing_point_recorded(self, pair_dataset):
        """整格失败只记录，不中断扫描"""
        grid = [SweepPoint(450.0, 3.5, 1), SweepPoint(20000.0, 3.5, 2)]
        result = sweep(pair_dataset, grid, gp=QUICK_GP)
        assert result.entry(1).report.overall_rmspe < 5.0
        assert len(result.entry(2).report.failed_folds) == pair_dataset.n_cells
        frame = sweep_frame(result)
        assert math.isnan(frame.loc[frame['config'] == 2, 'rmspe'].iloc[0])

    def test_n_sweep(self, pair_dataset):
        result = sweep(pair_dataset, [SweepPoint(450.0, 3.5, 2)], n_values=(2, 4), gp=QUICK_GP)
        assert result.primary_n == 4
        frame = n_sweep_frame(result)
        assert frame['n'].tolist() == [2, 4]
        assert result.entry(2, n=2).report.predictions[0].sg_window == 25

    def test_export_with_baseline(self, pair_dataset, tmp_path):
        result = compare_baseline(pair_dataset, [SweepPoint(450.0, 3.5, 2)], gp=QUICK_GP,
                                  n_values=(2, 4))
        written = ReportExporter().export_sweep(result, tmp_path / 'out', {'seed': 0})
        assert {'summary', 'sweep', 'predictions', 'per_cell', 'folds', 'n_sweep',
                'hyperparams', 'snapshot'} <= set(written)
        summary = pd.read_csv(written['summary'])
        assert summary['label'].tolist() == ['GP-ICE 2', 'IC+DV']
        assert (tmp_path / 'out' / 'config.snapshot').exists()
        print("✓ sweep export passed")

    def test_export_report(self, desk_report, tmp_path):
        written = ReportExporter().export_report(desk_report, tmp_path / 'eval')
        predictions = pd.read_csv(written['predictions'])
        assert len(predictions) == len(desk_report.predictions)
        per_cell = pd.read_csv(written['per_cell'])
        assert sorted(per_cell['cell_id']) == sorted(desk_report.per_cell_rmspe)
