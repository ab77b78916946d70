"""
⚙️ 运行配置 v0.1.0
JSON 配置文件 + 命令行覆盖；所有问题一次性列出
"""

import json
import math
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from battery.dataio import Direction
from battery.features import ExtractionConfig
from battery.smoothing import SGConfig
from gpr.kernels import KernelKind
from gpr.regression import GPConfig

from .harness import REFIT_MODES
from .sweep import SweepPoint

DEFAULT_DELTA_T = 1450.0


class ConfigError(ValueError):
    """配置不合法；errors 为全部问题"""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class RunConfig:
    """一次实验的全部参数（默认值: n=4, Matérn-5/2, 1 s 重采样, Δt=1450 s, v_l=3.7 V）"""
    manifest: Optional[str] = None
    direction: Optional[str] = None  # None: 由数据推断
    v_l: float = 3.7
    delta_t: Optional[float] = None  # 与 v_h 二选一，都不给时用 1450 s
    v_h: Optional[float] = None
    n: int = 4
    sg_window: int = 25
    sg_order: int = 3
    resample_interval: float = 1.0
    kernel: str = 'matern52'
    ard: bool = True
    restarts: int = 5
    max_iter: int = 200
    seed: int = 0
    refit: str = 'fold'
    output: str = 'reports'
    jobs: Optional[int] = None  # None: CPU 核数
    keep_going: bool = False
    baseline: bool = True
    grid: Optional[str] = None
    n_sweep: Optional[str] = None

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunConfig':
        errors = [f"unknown config key '{key}'"
                  for key in sorted(set(data) - set(cls.field_names()))]
        values = {}
        for key, value in data.items():
            if key not in FIELD_TYPES or value is None:
                values[key] = value
                continue
            try:
                values[key] = _coerce(value, FIELD_TYPES[key])
            except (TypeError, ValueError):
                errors.append(f"{key}: expected {FIELD_TYPES[key].__name__}, got {value!r}")
        if errors:
            raise ConfigError(errors)
        return cls(**values)

    def merged(self, overrides: Dict[str, Any]) -> 'RunConfig':
        """命令行覆盖（None 表示未给出）"""
        return replace(self, **{k: v for k, v in overrides.items()
                                if v is not None and k in self.field_names()})

    # ============ 校验 ============

    def validate(self, require_manifest: bool = True) -> List[str]:
        errors: List[str] = []
        if require_manifest:
            if not self.manifest:
                errors.append("manifest: a dataset manifest path is required")
            elif not Path(self.manifest).exists():
                errors.append(f"manifest: file not found: {self.manifest}")
        direction = None
        if self.direction is not None:
            try:
                direction = Direction.parse(self.direction)
            except ValueError as e:
                errors.append(f"direction: {e}")
        if self.delta_t is not None and self.v_h is not None:
            errors.append("delta_t/v_h: give exactly one of delta_t and v_h")
        if self.delta_t is not None and not self.delta_t > 0:
            errors.append(f"delta_t: must be > 0, got {self.delta_t}")
        if self.v_h is not None:
            if direction is Direction.DISCHARGE and not self.v_h < self.v_l:
                errors.append(f"v_h: must be < v_l ({self.v_l}) for discharge, got {self.v_h}")
            elif direction is not Direction.DISCHARGE and not self.v_h > self.v_l:
                errors.append(f"v_h: must be > v_l ({self.v_l}), got {self.v_h}")
        if int(self.n) != self.n or self.n < 1:
            errors.append(f"n: must be a positive integer, got {self.n}")
        try:
            self.sg_config()
        except ValueError as e:
            errors.append(f"sg: {e}")
        try:
            KernelKind.parse(self.kernel)
        except ValueError as e:
            errors.append(f"kernel: {e}")
        if self.restarts < 1:
            errors.append(f"restarts: must be >= 1, got {self.restarts}")
        if self.max_iter < 1:
            errors.append(f"max_iter: must be >= 1, got {self.max_iter}")
        if self.refit not in REFIT_MODES:
            errors.append(f"refit: must be one of {list(REFIT_MODES)}, got {self.refit!r}")
        if self.jobs is not None and self.jobs < 1:
            errors.append(f"jobs: must be >= 1, got {self.jobs}")
        if self.grid is not None and not Path(self.grid).exists():
            errors.append(f"grid: file not found: {self.grid}")
        if self.n_sweep is not None:
            try:
                parse_n_sweep(self.n_sweep)
            except ValueError as e:
                errors.append(f"n_sweep: {e}")
        return errors

    def check(self, require_manifest: bool = True) -> 'RunConfig':
        errors = self.validate(require_manifest)
        if errors:
            raise ConfigError(errors)
        return self

    # ============ 各模块配置 ============

    def sg_config(self) -> SGConfig:
        return SGConfig(window_length=self.sg_window, polyorder=self.sg_order,
                        resample_interval=self.resample_interval)

    def extraction_config(self) -> ExtractionConfig:
        if self.v_h is not None:
            return ExtractionConfig(v_l=self.v_l, v_h=self.v_h, n=self.n)
        delta_t = self.delta_t if self.delta_t is not None else DEFAULT_DELTA_T
        return ExtractionConfig(v_l=self.v_l, delta_t=delta_t, n=self.n)

    def gp_config(self) -> GPConfig:
        return GPConfig(kernel=KernelKind.parse(self.kernel), ard=self.ard,
                        restarts=self.restarts, max_iter=self.max_iter)

    def direction_or_none(self) -> Optional[Direction]:
        return Direction.parse(self.direction) if self.direction is not None else None

    def effective_jobs(self) -> int:
        return self.jobs if self.jobs is not None else (os.cpu_count() or 1)

    def n_values(self) -> List[int]:
        return parse_n_sweep(self.n_sweep) if self.n_sweep else [self.n]


FIELD_TYPES = {
    'v_l': float, 'delta_t': float, 'v_h': float, 'n': int, 'sg_window': int, 'sg_order': int,
    'resample_interval': float, 'ard': bool, 'restarts': int, 'max_iter': int, 'seed': int,
    'jobs': int, 'keep_going': bool, 'baseline': bool,
    'manifest': str, 'direction': str, 'kernel': str, 'refit': str, 'output': str,
    'grid': str, 'n_sweep': str,
}


def _coerce(value: Any, kind: type) -> Any:
    if kind is bool:
        if isinstance(value, bool):
            return value
        if str(value).strip().lower() in ('true', '1', 'yes'):
            return True
        if str(value).strip().lower() in ('false', '0', 'no'):
            return False
        raise ValueError(value)
    if kind is int:
        if isinstance(value, bool) or float(value) != int(float(value)):
            raise ValueError(value)
        return int(float(value))
    if kind is float and isinstance(value, bool):
        raise ValueError(value)
    return kind(value)


def load_run_config(path) -> RunConfig:
    """读取 JSON 配置文件: 扁平的 key → value"""
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config: file not found: {path}"])
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError([f"config: {path} is not valid JSON ({e})"])
    if not isinstance(data, dict):
        raise ConfigError([f"config: {path} must hold a JSON object"])
    return RunConfig.from_dict(data)


def parse_n_sweep(text: str) -> List[int]:
    """'2:12:2' → [2, 4, ..., 12]（含终点）；也接受 '4' 或 '2,4,8'"""
    text = str(text).strip()
    try:
        if ':' in text:
            parts = [int(p) for p in text.split(':')]
            if len(parts) not in (2, 3):
                raise ValueError
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else 1
            if step < 1 or stop < start:
                raise ValueError
            values = list(range(start, stop + 1, step))
        else:
            values = [int(p) for p in text.split(',') if p.strip()]
    except ValueError:
        raise ValueError(f"cannot parse n sweep '{text}' (expected start:stop[:step])")
    if not values or min(values) < 1:
        raise ValueError(f"n sweep '{text}' must list positive integers")
    return values


class GridFileError(ConfigError):
    """网格文件某一行不合法"""


def read_grid_csv(path) -> List[SweepPoint]:
    """网格 CSV: delta_t,v_l[,config]；错误按文件行号报告（表头为第 1 行）"""
    path = Path(path)
    if not path.exists():
        raise GridFileError([f"grid: file not found: {path}"])
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True, skip_blank_lines=False)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise GridFileError([f"grid: {path}: unreadable ({e})"])
    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in ('delta_t', 'v_l') if c not in frame.columns]
    if missing:
        raise GridFileError([f"grid: {path}: missing column(s) {missing}"])
    if len(frame) == 0:
        raise GridFileError([f"grid: {path}: no rows"])

    errors, points = [], []
    for i, row in enumerate(frame.itertuples(index=False)):
        line = i + 2
        if all(pd.isna(value) for value in row):
            continue
        try:
            delta_t = float(row.delta_t)
            v_l = float(row.v_l)
            if not (math.isfinite(delta_t) and math.isfinite(v_l)):
                raise ValueError("delta_t and v_l must both be numbers")
            index = int(row.config) if 'config' in frame.columns and pd.notna(row.config) else None
            points.append(SweepPoint(delta_t, v_l, index))
        except (TypeError, ValueError) as e:
            errors.append(f"grid: {path}: bad row at line {line} ({e})")
    if errors:
        raise GridFileError(errors)
    return points
