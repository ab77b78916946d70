"""
📊 精确高斯过程回归 v0.1.0
Cholesky 分解、NLML 与解析梯度、L-BFGS-B 多起点优化、带方差的预测
"""

import logging
import math
from dataclasses import dataclass, asdict
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .kernels import KernelHyperparams, KernelKind, covariance, covariance_gradients

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
JITTER_LEVELS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)  # × mean(diag K)
NEGATIVE_VARIANCE_TOLERANCE = 1e-10

# 标准化单位下的搜索范围与初值
SIGNAL_BOUNDS = (1e-3, 1e3)  # × 输出标准差
LENGTHSCALE_BOUNDS = (1e-3, 1e3)
NOISE_BOUNDS = (1e-6, 10.0)  # × 输出标准差
INITIAL_NOISE_FRACTION = 0.05
RESTART_SPREAD = 1.5  # 对数空间均匀扰动 ±1.5


class FactorizationError(RuntimeError):
    """加到最大 jitter 仍无法 Cholesky 分解"""


@dataclass(frozen=True)
class GPConfig:
    kernel: KernelKind = KernelKind.MATERN52
    ard: bool = True  # False: 单一长度尺度
    restarts: int = 5
    max_iter: int = 200
    gtol: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, 'kernel', KernelKind.parse(self.kernel))
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.gtol > 0:
            raise ValueError(f"gtol must be > 0, got {self.gtol}")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['kernel'] = self.kernel.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'GPConfig':
        return cls(kernel=KernelKind.parse(data.get('kernel', 'matern52')),
                   ard=bool(data.get('ard', True)), restarts=int(data.get('restarts', 5)),
                   max_iter=int(data.get('max_iter', 200)), gtol=float(data.get('gtol', 1e-5)))


@dataclass(frozen=True)
class Prediction:
    mean: float  # Ah
    std: float

    @property
    def variance(self) -> float:
        return self.std ** 2

    def interval(self, k: float = 2.0) -> Tuple[float, float]:
        return self.mean - k * self.std, self.mean + k * self.std


# ============ 线性代数 ============

def cholesky_with_jitter(matrix: np.ndarray) -> Tuple[np.ndarray, float]:
    """下三角 L；不行就在对角线加 jitter，逐级 ×10"""
    if not np.all(np.isfinite(matrix)):
        raise FactorizationError("covariance matrix has non-finite entries")
    scale = float(np.mean(np.diag(matrix)))
    identity = np.eye(len(matrix))
    for level in JITTER_LEVELS:
        jitter = level * scale
        try:
            chol = cholesky(matrix + jitter * identity, lower=True, check_finite=False)
        except LinAlgError:
            continue
        if jitter > 0:
            logger.debug("Cholesky needed jitter %.3g", jitter)
        return chol, jitter
    raise FactorizationError(
        f"Cholesky failed with jitter up to {JITTER_LEVELS[-1]:g} x mean(diag K) = "
        f"{JITTER_LEVELS[-1] * scale:.3g}"
    )


def nlml(theta_log: Sequence[float], x: np.ndarray, y: np.ndarray,
         kind: Union[str, KernelKind] = KernelKind.MATERN52) -> Tuple[float, np.ndarray]:
    """负对数边缘似然及其对 θ_log 的梯度

    NLML = ½ yᵀα + Σ log diag L + (N/2) log 2π
    ∂/∂θ_i = ½ tr((K⁻¹ − ααᵀ) ∂K/∂θ_i)
    """
    hyperparams = KernelHyperparams.from_vector(theta_log, kind)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    n = len(y)
    k, gradients = covariance_gradients(x, hyperparams)
    noise_var = hyperparams.noise_std ** 2
    chol, _ = cholesky_with_jitter(k + noise_var * np.eye(n))
    alpha = cho_solve((chol, True), y, check_finite=False)

    value = 0.5 * float(y @ alpha) + float(np.sum(np.log(np.diag(chol)))) + 0.5 * n * LOG_2PI
    weights = cho_solve((chol, True), np.eye(n), check_finite=False) - np.outer(alpha, alpha)
    gradient = [0.5 * float(np.sum(weights * g)) for g in gradients]
    gradient.append(noise_var * float(np.trace(weights)))
    return value, np.array(gradient)


# ============ 模型 ============

@dataclass(frozen=True, eq=False)
class GPModel:
    """训练好的 GP: 超参数（秒）、训练数据（y 已去均值）、L 与 α"""
    hyperparams: KernelHyperparams
    train_x: np.ndarray
    train_y: np.ndarray
    y_mean: float
    chol: np.ndarray
    alpha: np.ndarray
    input_scale: np.ndarray
    jitter: float = 0.0
    nlml: Optional[float] = None
    converged: bool = True

    def __post_init__(self):
        for name in ('train_x', 'train_y', 'chol', 'alpha', 'input_scale'):
            array = np.array(getattr(self, name), dtype=float)
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @property
    def n_train(self) -> int:
        return self.train_x.shape[0]

    @property
    def n_dims(self) -> int:
        return self.train_x.shape[1]

    def standardised_hyperparams(self) -> KernelHyperparams:
        """长度尺度换回标准化单位（除以训练输入标准差）"""
        return self.hyperparams.rescaled(1.0 / self.input_scale)

    def predict_batch(self, x_star: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x_star = np.atleast_2d(np.asarray(x_star, dtype=float))
        if x_star.shape[1] != self.n_dims:
            raise ValueError(f"dimension mismatch: model expects {self.n_dims} inputs, "
                             f"got {x_star.shape[1]}")
        k_star = covariance(x_star, self.train_x, self.hyperparams)
        mean = k_star @ self.alpha + self.y_mean
        v = solve_triangular(self.chol, k_star.T, lower=True, check_finite=False)
        latent = self.hyperparams.signal_std ** 2 - np.sum(v ** 2, axis=0)
        if np.any(latent < -NEGATIVE_VARIANCE_TOLERANCE):
            logger.warning("⚠️ negative predictive variance (min %.3g) clamped to 0",
                           float(latent.min()))
        variance = np.maximum(latent, 0.0) + self.hyperparams.noise_std ** 2
        return mean, np.sqrt(variance)

    def predict(self, x_star: Sequence[float]) -> Prediction:
        x_star = np.asarray(x_star, dtype=float)
        if x_star.ndim != 1:
            raise ValueError("predict takes a single input vector; use predict_batch")
        mean, std = self.predict_batch(x_star[None, :])
        return Prediction(mean=float(mean[0]), std=float(std[0]))


def _training_arrays(x, y) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError(f"x ({x.shape}) and y ({y.shape}) disagree in length")
    if len(y) < 2:
        raise ValueError(f"insufficient data: GP fit needs N_D >= 2, got {len(y)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("training inputs and outputs must be finite")
    return x, y


def input_scale(x: np.ndarray, isotropic: bool = False) -> np.ndarray:
    """逐维标准差（常数列取 1）；各向同性时取几何平均"""
    std = np.std(np.asarray(x, dtype=float), axis=0)
    std = np.where(np.isfinite(std) & (std > 0), std, 1.0)
    if isotropic:
        std = np.full_like(std, math.exp(float(np.mean(np.log(std)))))
    return std


def assemble_model(train_x: np.ndarray, train_y_centered: np.ndarray, y_mean: float,
                   hyperparams: KernelHyperparams, scale: Optional[np.ndarray] = None,
                   nlml_value: Optional[float] = None, converged: bool = True) -> GPModel:
    """固定超参数，分解 K + σ_n²I 并求 α"""
    train_x = np.atleast_2d(np.asarray(train_x, dtype=float))
    train_y_centered = np.asarray(train_y_centered, dtype=float)
    k = covariance(train_x, train_x, hyperparams)
    k[np.diag_indices_from(k)] += hyperparams.noise_std ** 2
    chol, jitter = cholesky_with_jitter(k)
    if jitter > 0:
        logger.warning("⚠️ GP factorization needed jitter %.3g", jitter)
    alpha = cho_solve((chol, True), train_y_centered, check_finite=False)
    if scale is None:
        scale = input_scale(train_x, hyperparams.isotropic)
    return GPModel(hyperparams=hyperparams, train_x=train_x, train_y=train_y_centered,
                   y_mean=float(y_mean), chol=chol, alpha=alpha, input_scale=scale,
                   jitter=jitter, nlml=nlml_value, converged=converged)


def condition(x, y, hyperparams: KernelHyperparams) -> GPModel:
    """不优化，直接用给定超参数对训练数据条件化"""
    x, y = _training_arrays(x, y)
    y_mean = float(np.mean(y))
    return assemble_model(x, y - y_mean, y_mean, hyperparams)


# ============ 超参数优化 ============

def _standardised_start(init: Optional[KernelHyperparams], scale: np.ndarray,
                        n_lengthscales: int, y_std: float) -> np.ndarray:
    if init is None:
        return np.array([math.log(y_std)] + [0.0] * n_lengthscales
                        + [math.log(INITIAL_NOISE_FRACTION * y_std)])
    log_ls = np.array(init.log_lengthscales)
    if len(log_ls) != n_lengthscales:
        log_ls = np.full(n_lengthscales, float(np.mean(log_ls)))
    log_ls = log_ls - np.log(scale[:n_lengthscales])
    return np.array([init.log_signal_std, *log_ls, init.log_noise_std])


def fit(x, y, config: GPConfig = GPConfig(), init: Optional[KernelHyperparams] = None,
        seed: int = 0) -> GPModel:
    """最小化 NLML；init 及 R−1 个对数均匀扰动起点，取最优

    输入按训练标准差标准化后优化，结果换回秒。
    """
    x, y = _training_arrays(x, y)
    n_dims = x.shape[1]
    n_lengthscales = n_dims if config.ard else 1
    y_mean = float(np.mean(y))
    centered = y - y_mean
    y_std = float(np.std(centered))
    if not y_std > 0:
        y_std = max(abs(y_mean) * 1e-3, 1e-6)
    scale = input_scale(x, isotropic=not config.ard)
    z = x / scale

    bounds = ([(math.log(SIGNAL_BOUNDS[0] * y_std), math.log(SIGNAL_BOUNDS[1] * y_std))]
              + [(math.log(LENGTHSCALE_BOUNDS[0]), math.log(LENGTHSCALE_BOUNDS[1]))]
              * n_lengthscales
              + [(math.log(NOISE_BOUNDS[0] * y_std), math.log(NOISE_BOUNDS[1] * y_std))])
    lower, upper = np.array(bounds).T
    start = np.clip(_standardised_start(init, scale, n_lengthscales, y_std), lower, upper)
    rng = np.random.default_rng(seed)
    starts: List[np.ndarray] = [start]
    for _ in range(config.restarts - 1):
        jump = rng.uniform(-RESTART_SPREAD, RESTART_SPREAD, len(start))
        starts.append(np.clip(start + jump, lower, upper))

    def objective(theta):
        return nlml(theta, z, centered, config.kernel)

    initial_value, _ = objective(starts[0])
    if not math.isfinite(initial_value):
        raise ValueError("non-finite NLML at initialization")

    best = None
    for index, theta0 in enumerate(starts):
        try:
            result = minimize(objective, theta0, jac=True, method='L-BFGS-B', bounds=bounds,
                              options={'maxiter': config.max_iter, 'gtol': config.gtol})
        except FactorizationError as e:
            logger.warning("⚠️ restart %d abandoned: %s", index, e)
            continue
        logger.debug("restart %d: NLML %.6g after %d iterations", index, result.fun, result.nit)
        if math.isfinite(result.fun) and (best is None or result.fun < best.fun):
            best = result
    if best is None:
        raise FactorizationError("every optimizer restart failed to factorize")
    if best.nit >= config.max_iter:
        logger.warning("⚠️ NLML optimizer reached the iteration cap (%d)", config.max_iter)

    hyperparams = KernelHyperparams.from_vector(best.x, config.kernel).rescaled(scale)
    return assemble_model(x, centered, y_mean, hyperparams, scale=scale,
                          nlml_value=float(best.fun), converged=bool(best.success))


def fit_samples(samples, config: GPConfig = GPConfig(),
                init: Optional[KernelHyperparams] = None, seed: int = 0) -> GPModel:
    """FeatureSample 列表 → GP"""
    x = np.vstack([s.x for s in samples]) if samples else np.empty((0, 1))
    y = np.array([s.y for s in samples], dtype=float)
    return fit(x, y, config, init, seed)
