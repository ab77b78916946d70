# 📈 IC/DV 峰值追踪基线 v0.1.0
# 增量容量 dQ/dV 与微分电压 dV/dQ，各取最大峰的位置与高度 → 4 维输入

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.signal import find_peaks

from .dataio import SECONDS_PER_HOUR, Dataset, GVCurve
from .smoothing import SGConfig, SmoothedCurve, smooth_curve

logger = logging.getLogger(__name__)

IC_VOLTAGE_STEP = 0.005  # V
DV_CHARGE_POINTS = 200
MIN_IC_STEPS = 10

CurveKey = Tuple[str, str]


# ============ 数据类型 ============

@dataclass(frozen=True, eq=False)
class DifferentialCurve:
    """IC (横轴 V, 纵轴 Ah/V) 或 DV (横轴 Ah, 纵轴 V/Ah) 曲线

    纵轴按 sign·V 计算，充放电的峰都是极大值。
    """
    abscissa: np.ndarray
    ordinate: np.ndarray
    kind: str  # 'IC' | 'DV'
    unbounded: bool = False  # 存在电压平台，dQ/dV 无界

    def __post_init__(self):
        if self.kind not in ('IC', 'DV'):
            raise ValueError(f"kind must be 'IC' or 'DV', got {self.kind!r}")
        abscissa = np.array(self.abscissa, dtype=float)
        ordinate = np.array(self.ordinate, dtype=float)
        abscissa.setflags(write=False)
        ordinate.setflags(write=False)
        object.__setattr__(self, 'abscissa', abscissa)
        object.__setattr__(self, 'ordinate', ordinate)
        if abscissa.shape != ordinate.shape or abscissa.ndim != 1:
            raise ValueError("abscissa and ordinate must be 1-D and equally long")
        if not np.all(np.isfinite(ordinate)):
            raise ValueError(f"{self.kind} curve has non-finite ordinates")
        steps = np.diff(abscissa)
        if len(steps) and not (np.all(steps > 0) or np.all(steps < 0)):
            raise ValueError(f"{self.kind} abscissa must be strictly monotone")

    def __len__(self) -> int:
        return len(self.abscissa)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'abscissa': self.abscissa, 'ordinate': self.ordinate,
                             'kind': self.kind})


@dataclass(frozen=True)
class Peak:
    location: float
    magnitude: float
    interior: bool = True


@dataclass(frozen=True)
class PeakFeature:
    """IC+DV 输入: 两条曲线各自最大峰的位置和高度"""
    ic_peak_location: float  # V
    ic_peak_magnitude: float  # Ah/V
    dv_peak_location: float  # Ah
    dv_peak_magnitude: float  # V/Ah
    ic_interior: bool = True
    dv_interior: bool = True
    ic_unbounded: bool = False

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_vector())):
            raise ValueError(f"non-finite peak features {self.as_vector().tolist()}")

    def as_vector(self) -> np.ndarray:
        return np.array([self.ic_peak_location, self.ic_peak_magnitude,
                         self.dv_peak_location, self.dv_peak_magnitude])


# ============ 微分曲线 ============

def _charge_and_voltage(curve: SmoothedCurve, current: float,
                        voltage_step: float) -> Tuple[np.ndarray, np.ndarray, float]:
    """Q = |I| t / 3600 与 sign·V；电压回落超过一个电压步长视为非单调"""
    if current == 0:
        raise ValueError("current must be nonzero")
    sign = 1.0 if current > 0 else -1.0
    charge = abs(current) * (curve.time - curve.time[0]) / SECONDS_PER_HOUR
    u = sign * curve.voltage
    drawdown = np.maximum.accumulate(u) - u
    if drawdown.max() > voltage_step:
        at = int(np.argmax(drawdown))
        raise ValueError(
            f"non-monotone voltage in '{curve.source_id}': falls back {drawdown[at] * 1e3:.1f} mV "
            f"at t = {curve.time[at]:g} s"
        )
    span = u.max() - u[0]
    if span < MIN_IC_STEPS * voltage_step:
        raise ValueError(
            f"voltage range {span * 1e3:.1f} mV of '{curve.source_id}' is under "
            f"{MIN_IC_STEPS} grid steps of {voltage_step * 1e3:g} mV"
        )
    return charge, u, sign


def compute_ic(curve: SmoothedCurve, current: float,
               voltage_step: float = IC_VOLTAGE_STEP) -> DifferentialCurve:
    """dQ/dV 重采样到均匀 5 mV 电压网格

    顺序: 先把 Q(V) 线性插值到 5 mV 网格，再做中心差分（不是时间网格上差分后重采样），
    两种顺序的峰位相差不超过一个网格步长。
    """
    charge, u, sign = _charge_and_voltage(curve, current, voltage_step)
    # 时间网格上的中心差分 ΔV ≤ 0 说明有平台，dQ/dV 无界
    unbounded = bool(np.any(np.gradient(u) <= 0))

    levels, first = np.unique(np.maximum.accumulate(u), return_index=True)
    n_steps = int(np.floor((levels[-1] - levels[0]) / voltage_step + 1e-9))
    grid = levels[0] + voltage_step * np.arange(n_steps + 1)
    charge_on_grid = np.interp(grid, levels, charge[first])
    ordinate = np.gradient(charge_on_grid, grid)
    if unbounded:
        logger.debug("IC of '%s' flagged unbounded (flat voltage segment)", curve.source_id)
    return DifferentialCurve(abscissa=sign * grid, ordinate=ordinate, kind='IC',
                             unbounded=unbounded)


def compute_dv(curve: SmoothedCurve, current: float, n_points: int = DV_CHARGE_POINTS,
               voltage_step: float = IC_VOLTAGE_STEP) -> DifferentialCurve:
    """dV/dQ 在时间网格上中心差分，再重采样到 200 个均匀电量点"""
    charge, u, _ = _charge_and_voltage(curve, current, voltage_step)
    slope = np.gradient(u, charge)
    grid = np.linspace(charge[0], charge[-1], n_points)
    return DifferentialCurve(abscissa=grid, ordinate=np.interp(grid, charge, slope), kind='DV')


# ============ 峰值 ============

def largest_peak(curve: DifferentialCurve) -> Peak:
    """最高的内部局部极大；没有内部极大时退回全局最大并标记"""
    if len(curve) < 3:
        raise ValueError(f"{curve.kind} curve too short for peak search ({len(curve)} points)")
    ordinate = curve.ordinate
    peaks, _ = find_peaks(ordinate)
    interior = len(peaks) > 0
    candidates = peaks if interior else np.arange(len(ordinate))
    best = ordinate[candidates].max()
    tied = candidates[ordinate[candidates] == best]
    index = tied[np.argmin(curve.abscissa[tied])]
    return Peak(location=float(curve.abscissa[index]), magnitude=float(ordinate[index]),
                interior=interior)


def extract_icdv_features(curve: GVCurve, sg: SGConfig,
                          smoothed: Optional[SmoothedCurve] = None) -> PeakFeature:
    smoothed = smoothed if smoothed is not None else smooth_curve(curve, sg)
    current = curve.mean_current
    ic = compute_ic(smoothed, current)
    dv = compute_dv(smoothed, current)
    ic_peak = largest_peak(ic)
    dv_peak = largest_peak(dv)
    return PeakFeature(
        ic_peak_location=ic_peak.location, ic_peak_magnitude=ic_peak.magnitude,
        dv_peak_location=dv_peak.location, dv_peak_magnitude=dv_peak.magnitude,
        ic_interior=ic_peak.interior, dv_interior=dv_peak.interior,
        ic_unbounded=ic.unbounded,
    )


def icdv_feature_table(dataset: Dataset, sg: SGConfig,
                       smoothed: Optional[Dict[CurveKey, SmoothedCurve]] = None
                       ) -> Tuple[Dict[CurveKey, PeakFeature], List[Tuple[str, str, str]]]:
    """数据集所有曲线的峰值特征；失败的曲线记录原因后跳过"""
    features: Dict[CurveKey, PeakFeature] = {}
    failed: List[Tuple[str, str, str]] = []
    for curve, _ in dataset.samples():
        key = (curve.cell_id, curve.curve_id)
        try:
            features[key] = extract_icdv_features(
                curve, sg, smoothed.get(key) if smoothed is not None else None)
        except ValueError as e:
            failed.append((curve.cell_id, curve.curve_id, str(e)))
    if failed:
        logger.warning("⚠️ IC/DV features failed for %d curve(s)", len(failed))
    return features, failed
