# 📊 评估
# 留一电芯交叉验证、指标、扫描、报告导出、运行配置

__version__ = "0.1.0"

from .metrics import calibration_score, gaussian_coverage, rmspe
from .harness import (
    CellPrediction,
    EvaluationReport,
    FoldResult,
    leave_one_cell_out,
    leave_one_cell_out_icdv,
)
from .sweep import DEFAULT_GRID, SweepPoint, SweepResult, compare_baseline, sweep
from .report_exporter import ReportExporter
from .run_config import ConfigError, RunConfig, load_run_config

__all__ = [
    'calibration_score',
    'gaussian_coverage',
    'rmspe',
    'CellPrediction',
    'EvaluationReport',
    'FoldResult',
    'leave_one_cell_out',
    'leave_one_cell_out_icdv',
    'DEFAULT_GRID',
    'SweepPoint',
    'SweepResult',
    'compare_baseline',
    'sweep',
    'ReportExporter',
    'ConfigError',
    'RunConfig',
    'load_run_config',
]
