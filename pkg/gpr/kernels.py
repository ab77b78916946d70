"""
🌀 协方差核 v0.1.0
Matérn-5/2 与平方指数核，逐维长度尺度 (ARD) 或各向同性

超参数一律以对数形式保存，优化器在对数空间里工作，正值由结构保证。
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

SQRT5 = math.sqrt(5.0)


class KernelKind(Enum):
    MATERN52 = "matern52"
    SQUARED_EXPONENTIAL = "squared_exponential"

    @classmethod
    def parse(cls, value: Union[str, 'KernelKind']) -> 'KernelKind':
        if isinstance(value, KernelKind):
            return value
        aliases = {'matern': cls.MATERN52, 'se': cls.SQUARED_EXPONENTIAL,
                   'sqexp': cls.SQUARED_EXPONENTIAL, 'rbf': cls.SQUARED_EXPONENTIAL}
        text = str(value).strip().lower()
        if text in aliases:
            return aliases[text]
        try:
            return cls(text)
        except ValueError:
            raise ValueError(f"unknown kernel '{value}', choose from "
                             f"{[k.value for k in cls]}")


# ============ 核函数 ============

def kernel_matern52(r, signal_std: float = 1.0):
    """σ_f²·(1 + √5 r + 5r²/3)·exp(−√5 r)"""
    r = np.asarray(r, dtype=float)
    return signal_std ** 2 * (1.0 + SQRT5 * r + 5.0 * r ** 2 / 3.0) * np.exp(-SQRT5 * r)


def kernel_sqexp(r, signal_std: float = 1.0):
    """σ_f²·exp(−r²/2)"""
    r = np.asarray(r, dtype=float)
    return signal_std ** 2 * np.exp(-0.5 * r ** 2)


# ============ 超参数 ============

@dataclass(frozen=True)
class KernelHyperparams:
    """θ = {σ_f, ρ, σ_n}，长度尺度单位与输入相同（秒）"""
    log_signal_std: float
    log_lengthscales: Tuple[float, ...]  # 长度 1 表示各向同性
    log_noise_std: float
    kind: KernelKind = KernelKind.MATERN52

    def __post_init__(self):
        lengthscales = tuple(float(v) for v in np.atleast_1d(self.log_lengthscales))
        object.__setattr__(self, 'log_lengthscales', lengthscales)
        object.__setattr__(self, 'kind', KernelKind.parse(self.kind))
        values = (self.log_signal_std, self.log_noise_std) + lengthscales
        if not lengthscales or not all(math.isfinite(v) for v in values):
            raise ValueError(f"log-hyperparameters must be finite, got {values}")

    @classmethod
    def create(cls, signal_std: float, lengthscales: Union[float, Sequence[float]],
               noise_std: float, kind: Union[str, KernelKind] = KernelKind.MATERN52
               ) -> 'KernelHyperparams':
        lengthscales = np.atleast_1d(np.asarray(lengthscales, dtype=float))
        if signal_std <= 0 or noise_std <= 0 or np.any(lengthscales <= 0):
            raise ValueError("signal_std, lengthscales and noise_std must be > 0")
        return cls(math.log(signal_std), tuple(np.log(lengthscales)), math.log(noise_std),
                   KernelKind.parse(kind))

    @property
    def signal_std(self) -> float:
        return math.exp(self.log_signal_std)

    @property
    def noise_std(self) -> float:
        return math.exp(self.log_noise_std)

    @property
    def lengthscales(self) -> np.ndarray:
        return np.exp(np.array(self.log_lengthscales))

    @property
    def isotropic(self) -> bool:
        return len(self.log_lengthscales) == 1

    @property
    def n_params(self) -> int:
        return len(self.log_lengthscales) + 2

    def to_vector(self) -> np.ndarray:
        """[log σ_f, log ρ_1..ρ_d, log σ_n]"""
        return np.array([self.log_signal_std, *self.log_lengthscales, self.log_noise_std])

    @classmethod
    def from_vector(cls, vector: Sequence[float],
                    kind: Union[str, KernelKind] = KernelKind.MATERN52) -> 'KernelHyperparams':
        vector = np.asarray(vector, dtype=float)
        if len(vector) < 3:
            raise ValueError(f"hyperparameter vector needs >= 3 entries, got {len(vector)}")
        return cls(float(vector[0]), tuple(vector[1:-1]), float(vector[-1]),
                   KernelKind.parse(kind))

    def rescaled(self, input_scale: Union[float, Sequence[float]]) -> 'KernelHyperparams':
        """长度尺度乘以输入尺度（标准化单位 ↔ 秒）"""
        scale = np.atleast_1d(np.asarray(input_scale, dtype=float))
        if self.isotropic:
            scale = scale[:1]
        elif len(scale) == 1:
            scale = np.repeat(scale, len(self.log_lengthscales))
        elif len(scale) != len(self.log_lengthscales):
            raise ValueError(f"input scale of length {len(scale)} does not match "
                             f"{len(self.log_lengthscales)} lengthscales")
        return KernelHyperparams(self.log_signal_std,
                                 tuple(np.array(self.log_lengthscales) + np.log(scale)),
                                 self.log_noise_std, self.kind)

    def to_dict(self):
        return {'kernel': self.kind.value, 'signal_std': self.signal_std,
                'lengthscales': self.lengthscales.tolist(), 'noise_std': self.noise_std}


# ============ 协方差矩阵 ============

def _check_inputs(x1: np.ndarray, x2: np.ndarray, hyperparams: KernelHyperparams
                  ) -> Tuple[np.ndarray, np.ndarray]:
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    if x1.shape[1] != x2.shape[1]:
        raise ValueError(f"input dimension mismatch: {x1.shape[1]} vs {x2.shape[1]}")
    if not hyperparams.isotropic and len(hyperparams.log_lengthscales) != x1.shape[1]:
        raise ValueError(f"{len(hyperparams.log_lengthscales)} lengthscales for "
                         f"{x1.shape[1]}-dimensional inputs")
    return x1, x2


def scaled_distance(x1: np.ndarray, x2: np.ndarray, hyperparams: KernelHyperparams) -> np.ndarray:
    """r_ij = ‖(x_i − x_j)/ρ‖"""
    x1, x2 = _check_inputs(x1, x2, hyperparams)
    lengthscales = hyperparams.lengthscales
    return cdist(x1 / lengthscales, x2 / lengthscales)


def covariance(x1: np.ndarray, x2: np.ndarray, hyperparams: KernelHyperparams) -> np.ndarray:
    """K(x1, x2)，不含噪声项"""
    r = scaled_distance(x1, x2, hyperparams)
    if hyperparams.kind is KernelKind.MATERN52:
        return kernel_matern52(r, hyperparams.signal_std)
    return kernel_sqexp(r, hyperparams.signal_std)


def covariance_gradients(x: np.ndarray, hyperparams: KernelHyperparams
                         ) -> Tuple[np.ndarray, List[np.ndarray]]:
    """K(X, X) 及其对 [log σ_f, log ρ_d...] 的偏导（噪声项由调用方处理）"""
    x, _ = _check_inputs(x, x, hyperparams)
    lengthscales = hyperparams.lengthscales
    scaled = x / lengthscales
    if hyperparams.isotropic:
        per_dim = [cdist(scaled, scaled, 'sqeuclidean')]
    else:
        per_dim = [cdist(scaled[:, [d]], scaled[:, [d]], 'sqeuclidean')
                   for d in range(x.shape[1])]
    r2 = per_dim[0] if hyperparams.isotropic else np.sum(per_dim, axis=0)
    r = np.sqrt(np.maximum(r2, 0.0))
    variance = hyperparams.signal_std ** 2

    if hyperparams.kind is KernelKind.MATERN52:
        decay = np.exp(-SQRT5 * r)
        k = variance * (1.0 + SQRT5 * r + 5.0 * r2 / 3.0) * decay
        # ∂k/∂log ρ_d = σ_f²·(5/3)·(1 + √5 r)·exp(−√5 r)·D_d
        common = variance * (5.0 / 3.0) * (1.0 + SQRT5 * r) * decay
    else:
        k = variance * np.exp(-0.5 * r2)
        common = k
    gradients = [2.0 * k] + [common * d2 for d2 in per_dim]
    return k, gradients
