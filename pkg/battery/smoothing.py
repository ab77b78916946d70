"""
〰️ Savitzky-Golay 平滑 v0.1.0
均匀网格重采样 + SG 滤波，离线整条曲线与在线短片段共用
"""

import logging
from dataclasses import dataclass, replace, asdict
from typing import Any, Dict, Optional

import numpy as np
from scipy.signal import savgol_filter

from .dataio import GVCurve

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SGConfig:
    """SG 滤波参数"""
    window_length: int = 25  # 采样点数，奇数
    polyorder: int = 3
    resample_interval: float = 1.0  # 秒

    def __post_init__(self):
        if int(self.window_length) != self.window_length or int(self.polyorder) != self.polyorder:
            raise ValueError("window_length and polyorder must be integers")
        object.__setattr__(self, 'window_length', int(self.window_length))
        object.__setattr__(self, 'polyorder', int(self.polyorder))
        if self.polyorder < 0:
            raise ValueError(f"polyorder must be >= 0, got {self.polyorder}")
        if self.window_length % 2 == 0:
            raise ValueError(f"window_length must be odd, got {self.window_length}")
        if self.window_length < self.polyorder + 2:
            raise ValueError(
                f"window_length ({self.window_length}) must exceed polyorder + 1 "
                f"({self.polyorder + 1})"
            )
        if not self.resample_interval > 0:
            raise ValueError(f"resample_interval must be > 0, got {self.resample_interval}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SGConfig':
        return cls(
            window_length=data.get('window_length', 25),
            polyorder=data.get('polyorder', 3),
            resample_interval=float(data.get('resample_interval', 1.0)),
        )


@dataclass(frozen=True, eq=False)
class SmoothedCurve:
    """均匀网格上的电压曲线"""
    time: np.ndarray
    voltage: np.ndarray
    source_id: str = ""
    current: float = 0.0  # 平均电流 (A)，带符号
    interval: float = 1.0
    window_length: Optional[int] = None  # 实际 SG 窗口，None 表示尚未平滑

    def __post_init__(self):
        time = np.array(self.time, dtype=float)
        voltage = np.array(self.voltage, dtype=float)
        time.setflags(write=False)
        voltage.setflags(write=False)
        object.__setattr__(self, 'time', time)
        object.__setattr__(self, 'voltage', voltage)
        if time.ndim != 1 or time.shape != voltage.shape:
            raise ValueError("time and voltage must be 1-D and equally long")
        if len(time) < 2:
            raise ValueError(f"smoothed curve '{self.source_id}' needs at least 2 samples")
        if not np.allclose(np.diff(time), self.interval, rtol=0.0, atol=1e-9 * self.interval):
            raise ValueError(f"'{self.source_id}': time grid spacing must equal {self.interval} s")

    @property
    def n_samples(self) -> int:
        return len(self.time)

    @property
    def duration(self) -> float:
        return float(self.time[-1] - self.time[0])


# ============ 重采样 ============

def resample_uniform(curve: GVCurve, interval: float = 1.0) -> SmoothedCurve:
    """线性插值到 t = 0, Δ, 2Δ, … ≤ 最后时间戳（不外推）"""
    if not interval > 0:
        raise ValueError(f"interval must be > 0, got {interval}")
    elapsed = curve.time - curve.time[0]
    duration = float(elapsed[-1])
    if duration < 2 * interval:
        raise ValueError(
            f"curve '{curve.curve_id}' too short: {duration:g} s < 2 x {interval:g} s"
        )
    n_points = int(np.floor(duration / interval + 1e-9)) + 1
    grid = np.arange(n_points) * interval
    voltage = np.interp(grid, elapsed, curve.voltage)
    return SmoothedCurve(time=grid, voltage=voltage,
                         source_id=f"{curve.cell_id}/{curve.curve_id}",
                         current=curve.mean_current, interval=interval)


# ============ SG 滤波 ============

def savitzky_golay(values: np.ndarray, window_length: int, polyorder: int) -> np.ndarray:
    """SG 滤波；边界用首/尾完整窗口的拟合多项式求值（不缩窗）"""
    values = np.asarray(values, dtype=float)
    if len(values) < window_length:
        raise ValueError(
            f"input of {len(values)} samples shorter than window_length {window_length}"
        )
    return savgol_filter(values, window_length, polyorder, mode='interp')


def sg_smooth(curve: SmoothedCurve, config: SGConfig) -> SmoothedCurve:
    """对均匀网格曲线做 SG 平滑，输出长度不变"""
    smoothed = savitzky_golay(curve.voltage, config.window_length, config.polyorder)
    return replace(curve, voltage=smoothed, window_length=config.window_length)


def clamp_window(config: SGConfig, n_samples: int) -> SGConfig:
    """短片段: 窗口缩到不超过样本数的最大奇数"""
    if n_samples >= config.window_length:
        return config
    window = n_samples if n_samples % 2 == 1 else n_samples - 1
    if window < config.polyorder + 2:
        raise ValueError(
            f"segment of {n_samples} samples too short for polyorder {config.polyorder}"
        )
    logger.debug("SG window clamped %d -> %d for %d samples",
                 config.window_length, window, n_samples)
    return replace(config, window_length=window)


def smooth_curve(curve: GVCurve, config: SGConfig, clamp: bool = False) -> SmoothedCurve:
    """重采样后平滑（SG 假设均匀采样，所以先重采样）"""
    uniform = resample_uniform(curve, config.resample_interval)
    effective = clamp_window(config, uniform.n_samples) if clamp else config
    return sg_smooth(uniform, effective)
