"""
🧪 合成GV曲线生成器 v0.1.0
伪OCV(线性 + sigmoid 平台) + 容量衰减 + 欧姆过电位 + 测量噪声

用途: 端到端测试的真值来源，和 dataio 读写同一种 CSV + manifest。
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .dataio import CellRecord, Dataset, GVCurve, SECONDS_PER_HOUR, coulomb_count

logger = logging.getLogger(__name__)

VOLTAGE_LIMITS = (2.5, 4.3)
DEFAULT_NOISE_STD = 0.001  # 1 mV


# ============ 参数 ============

@dataclass(frozen=True)
class Plateau:
    """一个 sigmoid 平台: 在 SoC=center 附近把 OCV 压平，形成一个 IC 峰"""
    center: float
    amplitude: float  # V
    width: float

    def __post_init__(self):
        if not 0.0 <= self.center <= 1.0:
            raise ValueError(f"plateau center must lie in [0, 1], got {self.center}")
        if self.amplitude < 0 or not self.width > 0:
            raise ValueError("plateau amplitude must be >= 0 and width > 0")


@dataclass(frozen=True)
class OCVShape:
    """OCV(s) = base + slope·s − Σ a_k·sigmoid((s − c_k)/w_k)"""
    base: float = 3.45
    slope: float = 0.85
    plateaus: Tuple[Plateau, ...] = (Plateau(0.45, 0.05, 0.10), Plateau(0.75, 0.04, 0.08))

    def __post_init__(self):
        object.__setattr__(self, 'plateaus', tuple(
            p if isinstance(p, Plateau) else Plateau(**p) for p in self.plateaus))

    def voltage(self, soc: np.ndarray) -> np.ndarray:
        soc = np.asarray(soc, dtype=float)
        v = self.base + self.slope * soc
        for p in self.plateaus:
            v = v - p.amplitude * expit((soc - p.center) / p.width)
        return v

    def is_increasing(self, resolution: int = 2001) -> bool:
        return bool(np.all(np.diff(self.voltage(np.linspace(0.0, 1.0, resolution))) > 0))

    def to_dict(self) -> Dict[str, Any]:
        return {'base': self.base, 'slope': self.slope,
                'plateaus': [{'center': p.center, 'amplitude': p.amplitude, 'width': p.width}
                             for p in self.plateaus]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'OCVShape':
        plateaus = tuple(Plateau(**p) for p in data.get('plateaus', []))
        return cls(base=float(data.get('base', 3.45)), slope=float(data.get('slope', 0.85)),
                   plateaus=plateaus)


@dataclass(frozen=True)
class FadeSchedule:
    """容量倍率随参考循环编号下降；可选 knee（在 knee_cycle 突降后加速）

    给出 multipliers 时直接按编号查表。
    """
    rate: float = 0.003
    curvature: float = 0.0
    knee_cycle: Optional[int] = None
    knee_drop: float = 0.0
    knee_rate: float = 0.0
    multipliers: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if min(self.rate, self.curvature, self.knee_drop, self.knee_rate) < 0:
            raise ValueError("fade rates and knee parameters must be >= 0")
        if self.multipliers is not None:
            values = tuple(float(m) for m in self.multipliers)
            object.__setattr__(self, 'multipliers', values)
            if any(not 0 < m <= 1 for m in values):
                raise ValueError("capacity multipliers must lie in (0, 1]")
            if any(b > a for a, b in zip(values, values[1:])):
                raise ValueError("capacity multipliers must be nonincreasing")

    def multiplier(self, cycle_index: int) -> float:
        if cycle_index < 0:
            raise ValueError(f"cycle index must be >= 0, got {cycle_index}")
        if self.multipliers is not None:
            if cycle_index >= len(self.multipliers):
                raise ValueError(f"no multiplier for cycle {cycle_index}")
            return self.multipliers[cycle_index]
        value = 1.0 - self.rate * cycle_index - self.curvature * cycle_index ** 2
        if self.knee_cycle is not None and cycle_index >= self.knee_cycle:
            value -= self.knee_drop + self.knee_rate * (cycle_index - self.knee_cycle)
        if not 0 < value <= 1:
            raise ValueError(f"capacity multiplier {value:.4f} at cycle {cycle_index} "
                             f"outside (0, 1]")
        return value

    def to_dict(self) -> Dict[str, Any]:
        return {'rate': self.rate, 'curvature': self.curvature, 'knee_cycle': self.knee_cycle,
                'knee_drop': self.knee_drop, 'knee_rate': self.knee_rate,
                'multipliers': list(self.multipliers) if self.multipliers is not None else None}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'FadeSchedule':
        multipliers = data.get('multipliers')
        return cls(rate=float(data.get('rate', 0.003)),
                   curvature=float(data.get('curvature', 0.0)),
                   knee_cycle=data.get('knee_cycle'),
                   knee_drop=float(data.get('knee_drop', 0.0)),
                   knee_rate=float(data.get('knee_rate', 0.0)),
                   multipliers=tuple(multipliers) if multipliers is not None else None)


@dataclass(frozen=True)
class SynthCellSpec:
    """一个合成电芯"""
    cell_id: str
    initial_capacity: float = 0.74  # Ah
    fade: FadeSchedule = field(default_factory=FadeSchedule)
    ocv: OCVShape = field(default_factory=OCVShape)
    resistance: float = 0.05  # Ω
    noise_std: float = DEFAULT_NOISE_STD  # V
    seed: int = 0

    def __post_init__(self):
        if not self.initial_capacity > 0:
            raise ValueError(f"{self.cell_id}: initial_capacity must be > 0")
        if self.resistance < 0:
            raise ValueError(f"{self.cell_id}: resistance must be >= 0")
        if self.noise_std < 0:
            raise ValueError(f"{self.cell_id}: noise_std must be >= 0, got {self.noise_std}")
        if not self.ocv.is_increasing():
            raise ValueError(f"{self.cell_id}: OCV shape is not strictly increasing in SoC")

    def capacity(self, cycle_index: int) -> float:
        return self.initial_capacity * self.fade.multiplier(cycle_index)

    def to_dict(self) -> Dict[str, Any]:
        return {'cell_id': self.cell_id, 'initial_capacity': self.initial_capacity,
                'fade': self.fade.to_dict(), 'ocv': self.ocv.to_dict(),
                'resistance': self.resistance, 'noise_std': self.noise_std, 'seed': self.seed}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SynthCellSpec':
        return cls(
            cell_id=str(data['cell_id']),
            initial_capacity=float(data.get('initial_capacity', 0.74)),
            fade=FadeSchedule.from_dict(data.get('fade', {})),
            ocv=OCVShape.from_dict(data['ocv']) if 'ocv' in data else OCVShape(),
            resistance=float(data.get('resistance', 0.05)),
            noise_std=float(data.get('noise_std', DEFAULT_NOISE_STD)),
            seed=int(data.get('seed', 0)),
        )


# ============ 生成 ============

def generate_curve(spec: SynthCellSpec, cycle_index: int, current: float,
                   interval: float = 1.0) -> GVCurve:
    """一条完整的恒流充电(I>0)或放电(I<0)曲线，覆盖 SoC 0↔1

    端电压 = OCV(SoC) + I·R，I 带符号: 充电抬高、放电压低端电压。
    """
    if current == 0:
        raise ValueError("current must be nonzero")
    if not interval > 0:
        raise ValueError(f"interval must be > 0, got {interval}")
    capacity = spec.capacity(cycle_index)
    duration = capacity * SECONDS_PER_HOUR / abs(current)

    time = np.arange(int(np.floor(duration / interval)) + 1) * interval
    if duration - time[-1] > 1e-9 * interval:
        time = np.append(time, duration)
    else:
        time[-1] = duration
    throughput = np.clip(abs(current) * time / (SECONDS_PER_HOUR * capacity), 0.0, 1.0)
    soc = throughput if current > 0 else 1.0 - throughput

    clean = spec.ocv.voltage(soc) + current * spec.resistance
    low, high = VOLTAGE_LIMITS
    if clean.min() < low or clean.max() > high:
        raise ValueError(
            f"{spec.cell_id}: voltage {clean.min():.3f}..{clean.max():.3f} V leaves "
            f"[{low}, {high}] V at {current} A"
        )
    rng = np.random.default_rng([spec.seed, cycle_index])
    noise = rng.normal(0.0, spec.noise_std, len(time)) if spec.noise_std > 0 else 0.0

    curve = GVCurve(cell_id=spec.cell_id, curve_id=f"cycle_{cycle_index:03d}", time=time,
                    voltage=clean + noise, current=np.full(len(time), float(current)))
    curve.check_galvanostatic()
    return curve


def generate_dataset(specs: Sequence[SynthCellSpec], cycles: int, current: float,
                     interval: float = 1.0, name: str = "synthetic") -> Dataset:
    """每个电芯生成 cycles 条参考曲线，容量标签取库仑计数"""
    if not specs:
        raise ValueError("at least one cell spec is required")
    if cycles < 1:
        raise ValueError(f"cycles must be >= 1, got {cycles}")
    cells = []
    for spec in specs:
        curves = tuple(generate_curve(spec, k, current, interval) for k in range(cycles))
        cells.append(CellRecord(spec.cell_id, curves, tuple(coulomb_count(c) for c in curves)))
    dataset = Dataset(cells=tuple(cells), name=name)
    logger.info("🧪 generated '%s': N_C=%d, N_D=%d", name, dataset.n_cells, dataset.n_samples)
    return dataset


# ============ 预设 ============

def oxford_like_specs(n_cells: int = 8, seed: int = 0,
                      noise_std: float = DEFAULT_NOISE_STD) -> List[SynthCellSpec]:
    """0.74 Ah 软包电芯，1C 充电；第二个电芯在第 40 次参考循环出现 knee"""
    rng = np.random.default_rng(seed)
    specs = []
    for i in range(n_cells):
        knee = dict(knee_cycle=40, knee_drop=0.05, knee_rate=0.005) if i == 1 else {}
        plateaus = (Plateau(0.45 + rng.uniform(-0.01, 0.01), 0.05, 0.10),
                    Plateau(0.75 + rng.uniform(-0.01, 0.01), 0.04, 0.08))
        specs.append(SynthCellSpec(
            cell_id=f"Cell{i + 1}",
            initial_capacity=0.74 * rng.uniform(0.98, 1.02),
            fade=FadeSchedule(rate=rng.uniform(0.0025, 0.0035), curvature=1e-5, **knee),
            ocv=OCVShape(base=3.45 + rng.uniform(-0.003, 0.003), slope=0.85, plateaus=plateaus),
            resistance=rng.uniform(0.045, 0.055),
            noise_std=noise_std,
            seed=seed * 1000 + i,
        ))
    return specs


def nasa_like_specs(n_cells: int = 20, seed: int = 0,
                    noise_std: float = DEFAULT_NOISE_STD) -> List[SynthCellSpec]:
    """2.1 Ah 18650 电芯，2 A 放电；每 4 个电芯一组，组间衰减速率不同"""
    rng = np.random.default_rng(seed)
    group_rates = np.linspace(0.004, 0.008, 5)
    specs = []
    for i in range(n_cells):
        plateaus = (Plateau(0.30 + rng.uniform(-0.01, 0.01), 0.06, 0.08),
                    Plateau(0.70 + rng.uniform(-0.01, 0.01), 0.05, 0.07))
        specs.append(SynthCellSpec(
            cell_id=f"RW{i + 1}",
            initial_capacity=2.1 * rng.uniform(0.97, 1.03),
            fade=FadeSchedule(rate=group_rates[(i // 4) % 5] * rng.uniform(0.9, 1.1)),
            ocv=OCVShape(base=3.05 + rng.uniform(-0.005, 0.005), slope=1.15, plateaus=plateaus),
            resistance=rng.uniform(0.04, 0.06),
            noise_std=noise_std,
            seed=seed * 1000 + i,
        ))
    return specs


# 预设: (电芯生成函数, 电流 A, 默认参考循环数)
PRESETS: Dict[str, Tuple[Callable[..., List[SynthCellSpec]], float, int]] = {
    'oxford': (oxford_like_specs, 0.74, 65),
    'nasa': (nasa_like_specs, -2.0, 42),
}


@dataclass(frozen=True)
class SynthPlan:
    """synth 命令的 JSON 描述: 预设或显式 cells 列表"""
    preset: str = 'oxford'
    n_cells: Optional[int] = None
    cycles: Optional[int] = None
    seed: int = 0
    noise_std: float = DEFAULT_NOISE_STD
    interval: float = 1.0
    current: Optional[float] = None
    name: Optional[str] = None
    cells: Tuple[SynthCellSpec, ...] = ()

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset '{self.preset}', choose from {sorted(PRESETS)}")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")
        if not self.interval > 0:
            raise ValueError(f"interval must be > 0, got {self.interval}")
        if self.n_cells is not None and self.n_cells < 1:
            raise ValueError(f"n_cells must be >= 1, got {self.n_cells}")
        if self.cycles is not None and self.cycles < 1:
            raise ValueError(f"cycles must be >= 1, got {self.cycles}")
        if self.current is not None and self.current == 0:
            raise ValueError("current must be nonzero")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SynthPlan':
        known = {'preset', 'n_cells', 'cycles', 'seed', 'noise_std', 'interval', 'current',
                 'name', 'cells'}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown synth key(s) {unknown}")
        cells = tuple(SynthCellSpec.from_dict(c) for c in data.get('cells', []))
        return cls(preset=data.get('preset', 'oxford'), n_cells=data.get('n_cells'),
                   cycles=data.get('cycles'), seed=int(data.get('seed', 0)),
                   noise_std=float(data.get('noise_std', DEFAULT_NOISE_STD)),
                   interval=float(data.get('interval', 1.0)), current=data.get('current'),
                   name=data.get('name'), cells=cells)

    def build(self) -> Dataset:
        factory, preset_current, preset_cycles = PRESETS[self.preset]
        if self.cells:
            specs = list(self.cells)
        elif self.n_cells is not None:
            specs = factory(n_cells=self.n_cells, seed=self.seed, noise_std=self.noise_std)
        else:
            specs = factory(seed=self.seed, noise_std=self.noise_std)
        current = self.current if self.current is not None else preset_current
        cycles = self.cycles if self.cycles is not None else preset_cycles
        return generate_dataset(specs, cycles, current, self.interval,
                                name=self.name or f"synthetic-{self.preset}")


def with_noise(specs: Sequence[SynthCellSpec], noise_std: float) -> List[SynthCellSpec]:
    return [replace(spec, noise_std=noise_std) for spec in specs]
