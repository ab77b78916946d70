"""
📐 特征提取 v0.1.0
平滑后的GV曲线 → 等间隔电压点上的时间值 x (回归输入)

在线: 从 V_l 开始恒流 Δt 秒，V_h 为结束时电压；
离线: 每条完整参考曲线在同一组电压点上取时间，配上容量标签 y。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .dataio import Dataset, Direction, GVCurve
from .errors import RangeNotCoveredError, SegmentTooShortError
from .smoothing import SGConfig, SmoothedCurve, smooth_curve

logger = logging.getLogger(__name__)

VOLTAGE_GRID_DECIMALS = 9  # 1 nV，保证 3.35 这类十进制电压精确表示
START_TOLERANCE = 0.005  # V，在线片段起点允许略高于 V_l
SEGMENT_MARGIN = 5.0  # s，切片段时 V_l 交点前后各多留的时间

CurveKey = Tuple[str, str]


@dataclass(frozen=True)
class ExtractionConfig:
    """在线测试设计: V_l、Δt 或 V_h（二选一）、输入维数 n"""
    v_l: float
    delta_t: Optional[float] = None
    v_h: Optional[float] = None
    n: int = 4

    def __post_init__(self):
        if (self.delta_t is None) == (self.v_h is None):
            raise ValueError("exactly one of delta_t and v_h must be given")
        if self.delta_t is not None and not self.delta_t > 0:
            raise ValueError(f"delta_t must be > 0, got {self.delta_t}")
        if self.v_h is not None and self.v_h == self.v_l:
            raise ValueError("v_h must differ from v_l")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, 'n', int(self.n))

    def check_direction(self, direction: Direction) -> None:
        """充电要求 v_h > v_l，放电要求 v_h < v_l"""
        if self.v_h is not None and not direction.sign * (self.v_h - self.v_l) > 0:
            relation = '>' if direction is Direction.CHARGE else '<'
            raise ValueError(f"v_h must be {relation} v_l for {direction.value} curves")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExtractionConfig':
        return cls(v_l=float(data['v_l']), delta_t=data.get('delta_t'),
                   v_h=data.get('v_h'), n=data.get('n', 4))


@dataclass(frozen=True, eq=False)
class FeatureSample:
    """一个回归样本: x (n 个时间, 秒) 与容量 y (Ah，在线样本为 None)"""
    x: np.ndarray
    y: Optional[float]
    cell_id: str
    curve_id: str

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        x.setflags(write=False)
        object.__setattr__(self, 'x', x)
        if x.ndim != 1 or len(x) == 0:
            raise ValueError("x must be a non-empty vector")
        if np.any(x < 0):
            raise ValueError(f"{self.cell_id}/{self.curve_id}: x must be >= 0")
        if np.any(np.diff(x) < 0):
            raise ValueError(f"{self.cell_id}/{self.curve_id}: x must be nondecreasing")


@dataclass
class TrainingSet:
    """离线训练集 + 被排除的曲线"""
    samples: List[FeatureSample]
    voltages: np.ndarray
    excluded: List[Tuple[str, str, str]] = field(default_factory=list)  # (cell, curve, 原因)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def x(self) -> np.ndarray:
        return np.vstack([s.x for s in self.samples])

    @property
    def y(self) -> np.ndarray:
        return np.array([s.y for s in self.samples], dtype=float)

    @property
    def cell_ids(self) -> List[str]:
        return sorted({s.cell_id for s in self.samples})


# ============ 交点 ============

def first_crossing_time(time: np.ndarray, voltage: np.ndarray, level: float,
                        sign: float = 1.0, source_id: str = "") -> float:
    """曲线第一次到达 level 的时间（相邻网格点之间线性插值）"""
    u = sign * np.asarray(voltage, dtype=float)
    target = sign * level
    hits = np.flatnonzero(u >= target)
    if len(hits) == 0:
        reach = float(np.max(voltage)) if sign > 0 else float(np.min(voltage))
        raise RangeNotCoveredError(level, reach, source_id)
    i = hits[0]
    if i == 0:
        return float(time[0])
    fraction = (target - u[i - 1]) / (u[i] - u[i - 1])
    return float(time[i - 1] + fraction * (time[i] - time[i - 1]))


def voltage_grid(v_l: float, v_h: float, n: int) -> np.ndarray:
    """V_k = v_l + k (v_h - v_l)/n, k = 1..n（不含 v_l，含 v_h）"""
    k = np.arange(1, n + 1)
    grid = np.round(v_l + k * (v_h - v_l) / n, VOLTAGE_GRID_DECIMALS)
    sign = 1.0 if v_h > v_l else -1.0
    # 末点不能越过 v_h
    if sign * (grid[-1] - v_h) > 0:
        grid[-1] = np.round(grid[-1] - sign * 10.0 ** -VOLTAGE_GRID_DECIMALS,
                            VOLTAGE_GRID_DECIMALS)
    return grid


def resolve_voltage_grid(config: ExtractionConfig, test_curve: SmoothedCurve,
                         direction: Union[Direction, str] = Direction.CHARGE,
                         start_tolerance: float = START_TOLERANCE) -> np.ndarray:
    """由在线片段确定 V_h 并生成 n 个等间隔电压点"""
    direction = Direction.parse(direction)
    sign = direction.sign
    time, voltage = test_curve.time, test_curve.voltage

    if sign * (voltage[0] - config.v_l) > start_tolerance:
        raise ValueError(
            f"segment '{test_curve.source_id}' starts at {voltage[0]:.4f} V, beyond "
            f"v_l = {config.v_l} V (+{start_tolerance} V tolerance)"
        )
    t_l = first_crossing_time(time, voltage, config.v_l, sign, test_curve.source_id)

    if config.v_h is not None:
        config.check_direction(direction)
        v_h = float(config.v_h)
    else:
        t_h = t_l + config.delta_t
        if t_h > time[-1] + 1e-9:
            raise SegmentTooShortError(
                f"segment '{test_curve.source_id}' lasts {time[-1] - t_l:.1f} s after the "
                f"v_l crossing, delta_t = {config.delta_t} s"
            )
        v_h = float(np.interp(t_h, time, voltage))

    if not sign * (v_h - config.v_l) > 0:
        raise ValueError(
            f"segment '{test_curve.source_id}' not monotone: voltage after delta_t "
            f"({v_h:.4f} V) does not pass v_l = {config.v_l} V for a {direction.value} curve"
        )
    if np.any(sign * np.diff(voltage) < 0):
        logger.debug("segment '%s' is locally non-monotone; first crossings used",
                     test_curve.source_id)
    return voltage_grid(config.v_l, v_h, config.n)


def extract_features(curve: SmoothedCurve, voltages: Iterable[float], v_l: float,
                     direction: Union[Direction, str] = Direction.CHARGE) -> np.ndarray:
    """x[k] = t(voltages[k]) - t(v_l)，均取第一次交点"""
    sign = Direction.parse(direction).sign
    t_l = first_crossing_time(curve.time, curve.voltage, v_l, sign, curve.source_id)
    times = np.array([first_crossing_time(curve.time, curve.voltage, v, sign, curve.source_id)
                      for v in voltages])
    return times - t_l


# ============ 在线片段 ============

def cut_online_segment(curve: GVCurve, smoothed: SmoothedCurve, v_l: float, delta_t: float,
                       direction: Union[Direction, str] = Direction.CHARGE,
                       margin: float = SEGMENT_MARGIN) -> GVCurve:
    """从完整曲线中截取 V_l 交点起 Δt 秒的原始数据（模拟在线短测试）"""
    sign = Direction.parse(direction).sign
    t_l = first_crossing_time(smoothed.time, smoothed.voltage, v_l, sign, smoothed.source_id)
    elapsed = curve.time - curve.time[0]
    if t_l + delta_t > elapsed[-1]:
        raise SegmentTooShortError(
            f"curve '{curve.cell_id}/{curve.curve_id}' ends {elapsed[-1] - t_l:.1f} s after "
            f"the v_l crossing, delta_t = {delta_t} s"
        )
    mask = (elapsed >= t_l - margin) & (elapsed <= t_l + delta_t + margin)
    if np.count_nonzero(mask) < 2:
        raise SegmentTooShortError(f"curve '{curve.curve_id}': fewer than 2 samples in segment")
    seg_time = elapsed[mask]
    temperature = curve.temperature_c[mask] if curve.temperature_c is not None else None
    return GVCurve(cell_id=curve.cell_id, curve_id=curve.curve_id,
                   time=seg_time - seg_time[0], voltage=curve.voltage[mask],
                   current=curve.current[mask], temperature_c=temperature)


# ============ 训练集 ============

def _try_smooth(curve: GVCurve, sg: SGConfig) -> Optional[SmoothedCurve]:
    try:
        return smooth_curve(curve, sg)
    except ValueError as e:
        logger.warning("⚠️ curve %s/%s cannot be smoothed: %s", curve.cell_id, curve.curve_id, e)
        return None


def smooth_dataset(dataset: Dataset, sg: SGConfig, jobs: int = 1) -> Dict[CurveKey, SmoothedCurve]:
    """整个数据集的曲线统一重采样 + 平滑

    比 SG 窗口还短的曲线不在返回的字典里，由使用方逐条跳过
    """
    curves = [curve for curve, _ in dataset.samples()]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            smoothed = list(pool.map(lambda c: _try_smooth(c, sg), curves))
    else:
        smoothed = [_try_smooth(c, sg) for c in curves]
    return {(c.cell_id, c.curve_id): s for c, s in zip(curves, smoothed) if s is not None}


def build_training_set(dataset: Dataset, config: ExtractionConfig, voltages: Iterable[float],
                       sg: SGConfig, direction: Union[Direction, str] = Direction.CHARGE,
                       smoothed: Optional[Dict[CurveKey, SmoothedCurve]] = None,
                       exclude_cells: Iterable[str] = (),
                       start_tolerance: float = START_TOLERANCE) -> TrainingSet:
    """每条覆盖电压范围的曲线产生一个样本；覆盖不到的计数并排除"""
    direction = Direction.parse(direction)
    sign = direction.sign
    voltages = np.asarray(list(voltages), dtype=float)
    exclude_cells = set(exclude_cells)
    samples: List[FeatureSample] = []
    excluded: List[Tuple[str, str, str]] = []

    for curve, capacity in dataset.samples():
        if curve.cell_id in exclude_cells:
            continue
        key = (curve.cell_id, curve.curve_id)
        if smoothed is not None and key in smoothed:
            sm = smoothed[key]
        else:
            try:
                sm = smooth_curve(curve, sg)
            except ValueError as e:
                excluded.append((curve.cell_id, curve.curve_id, f"unsmoothable ({e})"))
                continue
        if sign * (sm.voltage[0] - config.v_l) > start_tolerance:
            excluded.append((curve.cell_id, curve.curve_id,
                             f"starts at {sm.voltage[0]:.4f} V, past v_l"))
            continue
        try:
            x = extract_features(sm, voltages, config.v_l, direction)
        except RangeNotCoveredError as e:
            excluded.append((curve.cell_id, curve.curve_id,
                             f"range-not-covered (reaches {e.max_voltage:.4f} V)"))
            continue
        samples.append(FeatureSample(x=x, y=capacity, cell_id=curve.cell_id,
                                     curve_id=curve.curve_id))

    samples.sort(key=lambda s: (s.cell_id, s.curve_id))
    if excluded:
        logger.info("📉 %d curve(s) excluded from training (grid top %.4f V)",
                    len(excluded), voltages[-1] if len(voltages) else float('nan'))
    if not samples:
        raise ValueError(f"no training curve covers the voltage range "
                         f"{config.v_l} -> {voltages[-1] if len(voltages) else '?'} V")
    return TrainingSet(samples=samples, voltages=voltages, excluded=excluded)


def training_frame(samples: List[FeatureSample]) -> pd.DataFrame:
    """特征矩阵导出: cell_id,curve_id,x_1..x_n,y"""
    if not samples:
        return pd.DataFrame(columns=['cell_id', 'curve_id', 'y'])
    n = len(samples[0].x)
    rows = []
    for s in samples:
        row = {'cell_id': s.cell_id, 'curve_id': s.curve_id}
        row.update({f"x_{k + 1}": float(v) for k, v in enumerate(s.x)})
        row['y'] = s.y
        rows.append(row)
    return pd.DataFrame(rows, columns=['cell_id', 'curve_id']
                        + [f"x_{k + 1}" for k in range(n)] + ['y'])
