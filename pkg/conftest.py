# 🔋 GP-ICE - pytest 公共配置
# 仓库根目录加入 sys.path，提供合成曲线/数据集夹具

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from battery.dataio import GVCurve
from battery.smoothing import SmoothedCurve
from battery.synth import generate_dataset, oxford_like_specs


@pytest.fixture
def make_curve():
    """由 (time, voltage) 造一条恒流 GVCurve"""
    def _make(time, voltage, current=1.0, cell_id='A', curve_id='c0', temperature=None):
        time = np.asarray(time, dtype=float)
        if np.isscalar(current):
            current = np.full(len(time), float(current))
        return GVCurve(cell_id=cell_id, curve_id=curve_id, time=time,
                       voltage=np.asarray(voltage, dtype=float), current=current,
                       temperature_c=temperature)
    return _make


@pytest.fixture
def make_smoothed():
    """均匀网格上的解析曲线，跳过 SG 直接用于特征提取"""
    def _make(voltage_fn, duration, interval=1.0, current=1.0, source_id='A/c0'):
        time = np.arange(int(round(duration / interval)) + 1) * interval
        return SmoothedCurve(time=time, voltage=voltage_fn(time), source_id=source_id,
                             current=current, interval=interval)
    return _make


@pytest.fixture(scope='session')
def desk_dataset():
    """4 个电芯 × 12 条参考曲线，1 mV 噪声，0.74 A 充电"""
    return generate_dataset(oxford_like_specs(n_cells=4, seed=7), cycles=12, current=0.74,
                            name='desk')


@pytest.fixture(scope='session')
def pair_dataset():
    """2 个电芯 × 6 条曲线"""
    return generate_dataset(oxford_like_specs(n_cells=2, seed=3), cycles=6, current=0.74,
                            name='pair')
