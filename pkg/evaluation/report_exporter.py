"""
📝 报告导出模块 v0.1.0
评估/扫描结果写成 CSV 目录 + config.snapshot
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import pandas as pd

from .harness import EvaluationReport
from .sweep import SweepResult

logger = logging.getLogger(__name__)

SNAPSHOT_NAME = 'config.snapshot'


@dataclass
class ExportSettings:
    """导出设置"""
    float_format: str = '%.9g'  # 9 位有效数字
    encoding: str = 'utf-8'
    write_hyperparams: bool = True


# ============ 表格 ============

def summary_frame(reports: Iterable[EvaluationReport]) -> pd.DataFrame:
    """每行一个方法/配置: RMSPE 与 CS"""
    return pd.DataFrame([report.summary_row() for report in reports])


def predictions_frame(reports: Iterable[EvaluationReport]) -> pd.DataFrame:
    rows = []
    for report in reports:
        for p in report.predictions:
            rows.append({'label': report.label, 'cell_id': p.cell_id, 'curve_id': p.curve_id,
                         'y': p.y, 'yhat': p.yhat, 'sigma': p.sigma, 'v_h': p.v_h,
                         'sg_window': p.sg_window})
    return pd.DataFrame(rows, columns=['label', 'cell_id', 'curve_id', 'y', 'yhat', 'sigma',
                                       'v_h', 'sg_window'])


def per_cell_frame(reports: Iterable[EvaluationReport]) -> pd.DataFrame:
    """箱线图数据: 每个配置下各电芯的 RMSPE"""
    rows = [{'label': report.label, 'cell_id': cell_id, 'rmspe': value}
            for report in reports for cell_id, value in report.per_cell_rmspe.items()]
    return pd.DataFrame(rows, columns=['label', 'cell_id', 'rmspe'])


def hyperparams_frame(reports: Iterable[EvaluationReport]) -> pd.DataFrame:
    rows = []
    for report in reports:
        for fold in report.folds:
            for fitted in fold.hyperparams:
                hp = fitted.hyperparams
                row = {'label': report.label, 'test_cell_id': fitted.test_cell_id,
                       'v_h': fitted.v_h, 'source': fitted.source, 'kernel': hp.kind.value,
                       'signal_std': hp.signal_std, 'noise_std': hp.noise_std,
                       'nlml': fitted.nlml, 'n_train': fitted.n_train}
                row.update({f"lengthscale_{d + 1}": v for d, v in enumerate(hp.lengthscales)})
                rows.append(row)
    return pd.DataFrame(rows)


def folds_frame(reports: Iterable[EvaluationReport]) -> pd.DataFrame:
    """每折的排除/跳过计数和错误"""
    rows = []
    for report in reports:
        for fold in report.folds:
            rows.append({'label': report.label, 'test_cell_id': fold.test_cell_id,
                         'n_predictions': len(fold.predictions),
                         'n_skipped': len(fold.skipped),
                         'n_excluded_max': max(fold.excluded.values(), default=0),
                         'error': fold.error or ''})
    return pd.DataFrame(rows)


def sweep_frame(result: SweepResult) -> pd.DataFrame:
    """全部网格格子（含失败的）"""
    rows = []
    for entry in result.entries:
        row = {'config': entry.point.index, 'label': entry.label, 'delta_t': entry.point.delta_t,
               'v_l': entry.point.v_l, 'n': entry.n, 'rmspe': math.nan,
               'cs_0.67sigma': math.nan, 'cs_2sigma': math.nan, 'n_predictions': 0,
               'error': entry.error or ''}
        if entry.report is not None:
            row.update(rmspe=entry.report.overall_rmspe, n_predictions=len(entry.report.predictions))
            row['cs_0.67sigma'] = entry.report.cs_067
            row['cs_2sigma'] = entry.report.cs_2
        rows.append(row)
    return pd.DataFrame(rows)


def n_sweep_frame(result: SweepResult) -> pd.DataFrame:
    """RMSPE 随 n 变化的序列"""
    frame = sweep_frame(result)
    return frame[['config', 'label', 'delta_t', 'v_l', 'n', 'rmspe']].sort_values(
        ['config', 'n'], kind='mergesort').reset_index(drop=True)


# ============ 导出器 ============

class ReportExporter:
    """报告目录导出器"""

    def __init__(self, settings: Optional[ExportSettings] = None):
        self.settings = settings or ExportSettings()

    def _write(self, frame: pd.DataFrame, path: Path) -> Path:
        frame.to_csv(path, index=False, float_format=self.settings.float_format,
                     encoding=self.settings.encoding, lineterminator='\n')
        return path

    def write_snapshot(self, config: Dict[str, Any], directory: Path) -> Path:
        path = Path(directory) / SNAPSHOT_NAME
        with open(path, 'w', encoding=self.settings.encoding) as f:
            json.dump(config, f, indent=2, sort_keys=True, default=str)
        return path

    def export_report(self, report: EvaluationReport, directory,
                      run_config: Optional[Dict[str, Any]] = None) -> Dict[str, Path]:
        """单次评估: summary.csv, predictions.csv, per_cell.csv, folds.csv, config.snapshot"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = {
            'summary': self._write(summary_frame([report]), directory / 'summary.csv'),
            'predictions': self._write(predictions_frame([report]),
                                       directory / 'predictions.csv'),
            'per_cell': self._write(per_cell_frame([report]), directory / 'per_cell.csv'),
            'folds': self._write(folds_frame([report]), directory / 'folds.csv'),
        }
        if self.settings.write_hyperparams:
            written['hyperparams'] = self._write(hyperparams_frame([report]),
                                                 directory / 'hyperparams.csv')
        snapshot = {'run': run_config or {}, 'report': report.config}
        written['snapshot'] = self.write_snapshot(snapshot, directory)
        logger.info("📝 report written to %s", directory)
        return written

    def export_sweep(self, result: SweepResult, directory,
                     run_config: Optional[Dict[str, Any]] = None) -> Dict[str, Path]:
        """扫描: summary.csv (配置 → RMSPE), sweep.csv, n_sweep.csv, per_cell.csv, ..."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        reports = result.reports()
        all_reports: List[EvaluationReport] = [e.report for e in result.entries
                                               if e.report is not None]
        if result.baseline is not None:
            all_reports.append(result.baseline)

        summary = summary_frame(reports)
        if result.baseline_error:
            summary = pd.concat([summary, pd.DataFrame([{'label': 'IC+DV', 'method': 'ic+dv',
                                                         'rmspe': math.nan}])],
                                ignore_index=True)
        written = {
            'summary': self._write(summary, directory / 'summary.csv'),
            'sweep': self._write(sweep_frame(result), directory / 'sweep.csv'),
            'predictions': self._write(predictions_frame(reports), directory / 'predictions.csv'),
            'per_cell': self._write(per_cell_frame(reports), directory / 'per_cell.csv'),
            'folds': self._write(folds_frame(all_reports), directory / 'folds.csv'),
        }
        if len(result.n_values) > 1:
            written['n_sweep'] = self._write(n_sweep_frame(result), directory / 'n_sweep.csv')
        if self.settings.write_hyperparams:
            written['hyperparams'] = self._write(hyperparams_frame(all_reports),
                                                 directory / 'hyperparams.csv')
        snapshot = {'run': run_config or {}, 'sweep': result.config,
                    'baseline_error': result.baseline_error}
        written['snapshot'] = self.write_snapshot(snapshot, directory)
        logger.info("📝 sweep report written to %s (%d files)", directory, len(written))
        return written
