"""
🔋 GV曲线数据导入 v0.1.0
读取 manifest + CSV，库仑计数标注容量，按电芯组织样本
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from .errors import DataFormatError, NonGalvanostaticError, NonMonotoneTimeError

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ['time_s', 'voltage_v', 'current_a']
TEMPERATURE_COLUMN = 'temperature_c'
MANIFEST_COLUMNS = ['cell_id', 'curve_id', 'relative_path', 'capacity_ah']
MANIFEST_NAME = 'manifest.txt'

GALVANOSTATIC_CV_LIMIT = 0.01
SECONDS_PER_HOUR = 3600.0

PathLike = Union[str, Path]


class Direction(Enum):
    """充电 / 放电方向"""
    CHARGE = "charge"
    DISCHARGE = "discharge"

    @property
    def sign(self) -> float:
        """电压单调方向: 充电 +1, 放电 -1"""
        return 1.0 if self is Direction.CHARGE else -1.0

    @classmethod
    def parse(cls, value: Union[str, 'Direction']) -> 'Direction':
        if isinstance(value, Direction):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"direction must be 'charge' or 'discharge', got {value!r}")


def _frozen_array(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


# ============ 数据类型 ============

@dataclass(frozen=True, eq=False)
class GVCurve:
    """一条恒流电压-时间曲线 (Galvanostatic Voltage curve)"""
    cell_id: str
    curve_id: str
    time: np.ndarray  # 秒，从片段起点计
    voltage: np.ndarray  # 伏
    current: np.ndarray  # 安培，充电为正
    temperature_c: Optional[np.ndarray] = None  # 仅元数据

    def __post_init__(self):
        time = _frozen_array(self.time)
        voltage = _frozen_array(self.voltage)
        current = _frozen_array(self.current)
        object.__setattr__(self, 'time', time)
        object.__setattr__(self, 'voltage', voltage)
        object.__setattr__(self, 'current', current)
        if self.temperature_c is not None:
            temperature = _frozen_array(self.temperature_c)
            if temperature.shape != time.shape:
                raise ValueError(f"curve '{self.curve_id}': temperature length mismatch")
            object.__setattr__(self, 'temperature_c', temperature)

        if time.ndim != 1 or voltage.shape != time.shape or current.shape != time.shape:
            raise ValueError(
                f"curve '{self.curve_id}': time/voltage/current must be 1-D and equally long"
            )
        if len(time) < 2:
            raise ValueError(f"curve '{self.curve_id}' needs at least 2 samples, got {len(time)}")
        if not (np.all(np.isfinite(time)) and np.all(np.isfinite(voltage))
                and np.all(np.isfinite(current))):
            raise ValueError(f"curve '{self.curve_id}' contains non-finite values")
        if np.any(np.diff(time) <= 0):
            raise ValueError(f"curve '{self.curve_id}': time must be strictly increasing")

    def __eq__(self, other) -> bool:
        if not isinstance(other, GVCurve):
            return NotImplemented
        if (self.cell_id, self.curve_id) != (other.cell_id, other.curve_id):
            return False
        if (self.temperature_c is None) != (other.temperature_c is None):
            return False
        same_temperature = (self.temperature_c is None
                            or np.array_equal(self.temperature_c, other.temperature_c))
        return (np.array_equal(self.time, other.time)
                and np.array_equal(self.voltage, other.voltage)
                and np.array_equal(self.current, other.current)
                and same_temperature)

    __hash__ = None

    @property
    def n_samples(self) -> int:
        return len(self.time)

    @property
    def duration(self) -> float:
        return float(self.time[-1] - self.time[0])

    @property
    def mean_current(self) -> float:
        return float(np.mean(self.current))

    @property
    def direction(self) -> Direction:
        return Direction.CHARGE if self.mean_current >= 0 else Direction.DISCHARGE

    def current_cv(self) -> float:
        """电流变异系数 std/|mean|（符号翻转时很大）"""
        mean = self.mean_current
        if mean == 0:
            return math.inf
        return float(np.std(self.current) / abs(mean))

    def check_galvanostatic(self) -> None:
        """恒流检查: |I| > 0 且 CV < 1%"""
        cv = self.current_cv()
        if not cv < GALVANOSTATIC_CV_LIMIT:
            raise NonGalvanostaticError(self.curve_id, cv)


@dataclass(frozen=True)
class CellRecord:
    """一个电芯的全部参考曲线与容量标签"""
    cell_id: str
    curves: Tuple[GVCurve, ...]
    capacities: Tuple[float, ...]  # Ah

    def __post_init__(self):
        object.__setattr__(self, 'curves', tuple(self.curves))
        object.__setattr__(self, 'capacities', tuple(float(c) for c in self.capacities))
        if len(self.curves) != len(self.capacities):
            raise ValueError(f"cell '{self.cell_id}': one capacity per curve required")
        for curve, capacity in zip(self.curves, self.capacities):
            if curve.cell_id != self.cell_id:
                raise ValueError(
                    f"curve '{curve.curve_id}' belongs to '{curve.cell_id}', not '{self.cell_id}'"
                )
            if not capacity > 0:
                raise ValueError(f"curve '{curve.curve_id}': capacity must be > 0, got {capacity}")

    def __len__(self) -> int:
        return len(self.curves)


@dataclass(frozen=True)
class Dataset:
    """GV曲线数据集 (N_C 个电芯, N_D 条曲线)"""
    cells: Tuple[CellRecord, ...]
    name: str = "dataset"
    # 被拒收的曲线: (cell_id, curve_id, 原因)
    rejected: Tuple[Tuple[str, str, str], ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'cells', tuple(self.cells))
        ids = [cell.cell_id for cell in self.cells]
        duplicates = sorted({cid for cid in ids if ids.count(cid) > 1})
        if duplicates:
            raise ValueError(f"duplicate cell ids: {duplicates}")

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_samples(self) -> int:
        return sum(len(cell) for cell in self.cells)

    @property
    def cell_ids(self) -> List[str]:
        return [cell.cell_id for cell in self.cells]

    def cell(self, cell_id: str) -> CellRecord:
        for cell in self.cells:
            if cell.cell_id == cell_id:
                return cell
        raise KeyError(f"unknown cell '{cell_id}'")

    def samples(self) -> Iterator[Tuple[GVCurve, float]]:
        """依次产出 (曲线, 容量)"""
        for cell in self.cells:
            yield from zip(cell.curves, cell.capacities)


# ============ 库仑计数 ============

def coulomb_count(curve) -> float:
    """梯形积分 |I| dt，秒 → 小时，返回 Ah"""
    time = np.asarray(curve.time, dtype=float)
    current = np.asarray(curve.current, dtype=float)
    if len(time) < 2:
        raise ValueError("coulomb counting needs at least 2 samples")
    return float(trapezoid(np.abs(current), time) / SECONDS_PER_HOUR)


# ============ CSV 读取 ============

def _malformed_rows(frame: pd.DataFrame, columns: List[str]) -> List[int]:
    """非数字或缺失单元格所在的文件行号（表头为第1行）"""
    bad = np.zeros(len(frame), dtype=bool)
    for column in columns:
        bad |= pd.to_numeric(frame[column], errors='coerce').isna().to_numpy()
    return [int(i) + 2 for i in np.flatnonzero(bad)]


def read_curve_csv(path: PathLike, cell_id: str = "", curve_id: str = "") -> GVCurve:
    """读取一条曲线 CSV: time_s,voltage_v,current_a[,temperature_c]

    重复时间戳保留第一行并告警；时间倒退的曲线整条拒收。
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"curve file not found: {path}")
    curve_id = curve_id or path.stem

    try:
        frame = pd.read_csv(path, encoding='utf-8', skipinitialspace=True,
                            float_precision='round_trip')
    except pd.errors.EmptyDataError:
        raise DataFormatError("empty curve", path=str(path))
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataFormatError(f"unreadable CSV ({e})", path=str(path))

    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in CURVE_COLUMNS if c not in frame.columns]
    if missing:
        raise DataFormatError(f"missing column(s) {missing}; header must be "
                              f"{','.join(CURVE_COLUMNS)}[,{TEMPERATURE_COLUMN}]",
                              path=str(path))
    if len(frame) == 0:
        raise DataFormatError("empty curve", path=str(path))

    numeric_columns = list(CURVE_COLUMNS)
    has_temperature = TEMPERATURE_COLUMN in frame.columns
    if has_temperature:
        numeric_columns.append(TEMPERATURE_COLUMN)
    bad_rows = _malformed_rows(frame, numeric_columns)
    if bad_rows:
        raise DataFormatError(f"malformed row(s) (non-numeric field) at lines {bad_rows[:20]}",
                              path=str(path), indices=bad_rows)

    time = frame['time_s'].to_numpy(dtype=float)
    voltage = frame['voltage_v'].to_numpy(dtype=float)
    current = frame['current_a'].to_numpy(dtype=float)
    temperature = frame[TEMPERATURE_COLUMN].to_numpy(dtype=float) if has_temperature else None

    steps = np.diff(time)
    backwards = np.flatnonzero(steps < 0) + 1
    if len(backwards):
        raise NonMonotoneTimeError(
            f"non-monotone time at row indices {backwards[:20].tolist()}",
            path=str(path), indices=backwards.tolist(),
        )
    duplicates = np.flatnonzero(steps == 0) + 1
    if len(duplicates):
        logger.warning("⚠️ %s: %d duplicated timestamp row(s) collapsed (kept first), indices %s",
                       path.name, len(duplicates), duplicates[:20].tolist())
        keep = np.ones(len(time), dtype=bool)
        keep[duplicates] = False
        time, voltage, current = time[keep], voltage[keep], current[keep]
        if temperature is not None:
            temperature = temperature[keep]

    if len(time) < 2:
        raise DataFormatError("empty curve (fewer than 2 distinct timestamps)", path=str(path))

    curve = GVCurve(cell_id=cell_id, curve_id=curve_id, time=time - time[0],
                    voltage=voltage, current=current, temperature_c=temperature)
    curve.check_galvanostatic()
    return curve


def read_manifest(manifest_path: PathLike) -> pd.DataFrame:
    """读取 manifest: cell_id,curve_id,relative_path[,capacity_ah]，# 开头为注释"""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    try:
        frame = pd.read_csv(
            manifest_path, header=None, names=MANIFEST_COLUMNS, comment='#',
            dtype={'cell_id': str, 'curve_id': str, 'relative_path': str},
            skipinitialspace=True, skip_blank_lines=True, encoding='utf-8',
            float_precision='round_trip',
        )
    except pd.errors.EmptyDataError:
        raise DataFormatError("manifest lists no curves", path=str(manifest_path))
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataFormatError(f"malformed manifest ({e})", path=str(manifest_path))

    if len(frame) == 0:
        raise DataFormatError("manifest lists no curves", path=str(manifest_path))
    if frame[['cell_id', 'curve_id', 'relative_path']].isna().any().any():
        raise DataFormatError("manifest row missing cell_id, curve_id or path",
                              path=str(manifest_path))
    capacity = pd.to_numeric(frame['capacity_ah'], errors='coerce')
    bad = frame['capacity_ah'].notna() & capacity.isna()
    if bad.any():
        raise DataFormatError(f"non-numeric capacity_ah in manifest rows {list(np.flatnonzero(bad))}",
                              path=str(manifest_path))
    frame['capacity_ah'] = capacity.astype(float)
    for column in ('cell_id', 'curve_id', 'relative_path'):
        frame[column] = frame[column].str.strip()
    duplicated = frame.duplicated(subset=['cell_id', 'curve_id'])
    if duplicated.any():
        pairs = frame.loc[duplicated, ['cell_id', 'curve_id']].values.tolist()
        raise DataFormatError(f"duplicate (cell_id, curve_id) entries {pairs}",
                              path=str(manifest_path))
    return frame


def load_dataset(manifest_path: PathLike, name: Optional[str] = None) -> Dataset:
    """按 manifest 加载数据集

    容量标签: manifest 给出 capacity_ah 时直接使用，否则对整条曲线库仑计数。
    """
    manifest_path = Path(manifest_path)
    frame = read_manifest(manifest_path)
    root = manifest_path.parent

    curves_by_cell: Dict[str, List[GVCurve]] = {}
    capacities_by_cell: Dict[str, List[float]] = {}
    rejected: List[Tuple[str, str, str]] = []

    for row in frame.itertuples(index=False):
        try:
            curve = read_curve_csv(root / row.relative_path, row.cell_id, row.curve_id)
        except NonMonotoneTimeError as e:
            logger.warning("❌ rejected %s/%s: %s", row.cell_id, row.curve_id, e)
            rejected.append((row.cell_id, row.curve_id, str(e)))
            continue
        capacity = row.capacity_ah if not math.isnan(row.capacity_ah) else coulomb_count(curve)
        curves_by_cell.setdefault(row.cell_id, []).append(curve)
        capacities_by_cell.setdefault(row.cell_id, []).append(capacity)

    if not curves_by_cell:
        raise DataFormatError("no usable curves in manifest", path=str(manifest_path))

    cells = [CellRecord(cell_id, tuple(curves), tuple(capacities_by_cell[cell_id]))
             for cell_id, curves in curves_by_cell.items()]
    dataset = Dataset(cells=tuple(cells), name=name or root.name or manifest_path.stem,
                      rejected=tuple(rejected))
    logger.info("📂 loaded '%s': N_C=%d, N_D=%d (%d rejected)",
                dataset.name, dataset.n_cells, dataset.n_samples, len(rejected))
    return dataset


# ============ 导出 ============

def curve_frame(curve: GVCurve) -> pd.DataFrame:
    """曲线 → CSV 表"""
    columns = {'time_s': curve.time, 'voltage_v': curve.voltage, 'current_a': curve.current}
    if curve.temperature_c is not None:
        columns[TEMPERATURE_COLUMN] = curve.temperature_c
    return pd.DataFrame(columns)


def write_curve_csv(curve: GVCurve, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # 默认浮点格式为最短往返表示，重新读取逐位一致
    curve_frame(curve).to_csv(path, index=False, encoding='utf-8', lineterminator='\n')
    return path


def write_dataset(dataset: Dataset, directory: PathLike) -> Path:
    """写出 manifest.txt + curves/<cell>/<curve>.csv，返回 manifest 路径"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for cell in dataset.cells:
        for curve, capacity in zip(cell.curves, cell.capacities):
            relative = Path('curves') / cell.cell_id / f"{curve.curve_id}.csv"
            write_curve_csv(curve, directory / relative)
            rows.append((cell.cell_id, curve.curve_id, relative.as_posix(), repr(float(capacity))))

    manifest_path = directory / MANIFEST_NAME
    with open(manifest_path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(f"# {dataset.name}: {','.join(MANIFEST_COLUMNS)}\n")
        pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(f, header=False, index=False,
                                                            lineterminator='\n')
    logger.info("💾 wrote '%s' (%d curves) to %s", dataset.name, len(rows), directory)
    return manifest_path
