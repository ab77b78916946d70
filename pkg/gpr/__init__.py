# 📊 高斯过程回归
# 核函数、NLML 优化、预测、模型读写

__version__ = "0.1.0"

from .kernels import KernelHyperparams, KernelKind, covariance, kernel_matern52, kernel_sqexp
from .regression import (
    FactorizationError,
    GPConfig,
    GPModel,
    Prediction,
    condition,
    fit,
    fit_samples,
    nlml,
)
from .model_io import ModelFormatError, load_model, save_model

__all__ = [
    'KernelHyperparams',
    'KernelKind',
    'covariance',
    'kernel_matern52',
    'kernel_sqexp',
    'FactorizationError',
    'GPConfig',
    'GPModel',
    'Prediction',
    'condition',
    'fit',
    'fit_samples',
    'nlml',
    'ModelFormatError',
    'load_model',
    'save_model',
]
