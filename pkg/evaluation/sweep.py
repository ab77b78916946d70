"""
🧭 参数扫描 v0.1.0
(Δt, v_l) 网格 × n 值，逐格做留一电芯评估；可附带 IC+DV 基线对比
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from battery.dataio import Dataset, Direction
from battery.features import ExtractionConfig, smooth_dataset
from battery.smoothing import SGConfig
from gpr.regression import GPConfig

from .harness import (
    EvaluationReport,
    infer_direction,
    leave_one_cell_out,
    leave_one_cell_out_icdv,
    run_parallel,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepPoint:
    """一个在线测试设计 (Δt, v_l)；index 为配置编号"""
    delta_t: float
    v_l: float
    index: Optional[int] = None

    def __post_init__(self):
        if not self.delta_t > 0:
            raise ValueError(f"delta_t must be > 0, got {self.delta_t}")

    @property
    def label(self) -> str:
        if self.index is not None:
            return f"GP-ICE {self.index}"
        return f"GP-ICE dt={self.delta_t:g} v_l={self.v_l:g}"


# 6 个标准配置: Δt ∈ {10, 450, 1450} s × v_l ∈ {3.5, 3.7} V
DEFAULT_GRID: Tuple[SweepPoint, ...] = tuple(
    SweepPoint(delta_t, v_l, index)
    for index, (v_l, delta_t) in enumerate(
        ((v, d) for v in (3.5, 3.7) for d in (10.0, 450.0, 1450.0)), start=1)
)


def numbered(points: Sequence[SweepPoint]) -> List[SweepPoint]:
    """给没有编号的网格点按顺序编号"""
    return [p if p.index is not None else SweepPoint(p.delta_t, p.v_l, i)
            for i, p in enumerate(points, start=1)]


@dataclass
class SweepEntry:
    point: SweepPoint
    n: int
    report: Optional[EvaluationReport] = None
    error: Optional[str] = None

    @property
    def label(self) -> str:
        return self.point.label


@dataclass
class SweepResult:
    entries: List[SweepEntry]
    n_values: Tuple[int, ...]
    baseline: Optional[EvaluationReport] = None
    baseline_error: Optional[str] = None
    config: dict = field(default_factory=dict)

    @property
    def primary_n(self) -> int:
        """汇总表使用的 n（有 4 就用 4）"""
        return 4 if 4 in self.n_values else self.n_values[0]

    def primary_entries(self) -> List[SweepEntry]:
        return [e for e in self.entries if e.n == self.primary_n]

    def reports(self) -> List[EvaluationReport]:
        reports = [e.report for e in self.primary_entries() if e.report is not None]
        if self.baseline is not None:
            reports.append(self.baseline)
        return reports

    def entry(self, point_index: int, n: Optional[int] = None) -> SweepEntry:
        n = self.primary_n if n is None else n
        for e in self.entries:
            if e.point.index == point_index and e.n == n:
                return e
        raise KeyError(f"no sweep entry for configuration {point_index}, n={n}")


def sweep(dataset: Dataset, grid: Sequence[SweepPoint] = DEFAULT_GRID,
          n_values: Sequence[int] = (4,), sg: SGConfig = SGConfig(), gp: GPConfig = GPConfig(),
          seed: int = 0, direction: Optional[Direction] = None, refit: str = 'fold',
          jobs: int = 1) -> SweepResult:
    """每个 (网格点, n) 一份报告；单格失败只记录，不中断扫描"""
    grid = numbered(grid)
    n_values = tuple(int(n) for n in n_values)
    if not grid:
        raise ValueError("sweep grid is empty")
    if not n_values or min(n_values) < 1:
        raise ValueError(f"n values must be a nonempty list of positive integers, got {n_values}")
    direction = Direction.parse(direction) if direction is not None else infer_direction(dataset)
    smoothed = smooth_dataset(dataset, sg, jobs)

    def run(task: Tuple[SweepPoint, int]) -> SweepEntry:
        point, n = task
        try:
            extraction = ExtractionConfig(v_l=point.v_l, delta_t=point.delta_t, n=n)
            report = leave_one_cell_out(dataset, extraction, sg, gp, seed, direction, refit,
                                        keep_going=True, smoothed=smoothed, label=point.label)
        except (ValueError, RuntimeError) as e:
            logger.warning("❌ %s (n=%d) failed: %s", point.label, n, e)
            return SweepEntry(point, n, error=str(e))
        return SweepEntry(point, n, report=report)

    tasks = [(point, n) for point in grid for n in n_values]
    entries = run_parallel(run, tasks, jobs)
    logger.info("🧭 sweep finished: %d configuration(s), %d failed",
                len(entries), sum(1 for e in entries if e.error))
    return SweepResult(entries=entries, n_values=n_values,
                       config={'sg': sg.to_dict(), 'gp': gp.to_dict(), 'seed': seed,
                               'direction': direction.value, 'refit': refit,
                               'dataset': dataset.name,
                               'grid': [[p.index, p.delta_t, p.v_l] for p in grid],
                               'n_values': list(n_values)})


def compare_baseline(dataset: Dataset, grid: Sequence[SweepPoint] = DEFAULT_GRID,
                     sg: SGConfig = SGConfig(), gp: GPConfig = GPConfig(), seed: int = 0,
                     n_values: Sequence[int] = (4,), direction: Optional[Direction] = None,
                     refit: str = 'fold', jobs: int = 1) -> SweepResult:
    """GP-ICE 各配置 + IC+DV 一行，用于 RMSPE 对比表和箱线图数据"""
    result = sweep(dataset, grid, n_values, sg, gp, seed, direction, refit, jobs)
    try:
        result.baseline = leave_one_cell_out_icdv(dataset, sg, gp, seed, keep_going=True,
                                                  jobs=jobs)
    except (ValueError, RuntimeError) as e:
        logger.warning("❌ IC+DV baseline failed: %s", e)
        result.baseline_error = str(e)
    return result
