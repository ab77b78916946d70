# 💾 GP模型保存/加载
# JSON 文本格式，浮点数按 repr 写出，读回逐位一致

import json
import logging
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from .kernels import KernelHyperparams, KernelKind
from .regression import GPModel, assemble_model

logger = logging.getLogger(__name__)

MODEL_FORMAT = "gp-ice-model"
MODEL_VERSION = 1

PathLike = Union[str, Path]


class ModelFormatError(ValueError):
    """模型文件不是本格式或字段缺失"""


def model_to_dict(model: GPModel, metadata: Dict[str, Any] = None) -> Dict[str, Any]:
    hp = model.hyperparams
    return {
        'format': MODEL_FORMAT,
        'version': MODEL_VERSION,
        'kernel': hp.kind.value,
        'log_signal_std': hp.log_signal_std,
        'log_lengthscales': list(hp.log_lengthscales),
        'log_noise_std': hp.log_noise_std,
        'train_x': model.train_x.tolist(),
        'train_y_centered': model.train_y.tolist(),
        'y_mean': model.y_mean,
        'input_scale': model.input_scale.tolist(),
        'nlml': model.nlml,
        'metadata': metadata or {},
    }


def model_from_dict(data: Dict[str, Any]) -> Tuple[GPModel, Dict[str, Any]]:
    if data.get('format') != MODEL_FORMAT:
        raise ModelFormatError(f"not a {MODEL_FORMAT} document (format={data.get('format')!r})")
    if data.get('version') != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {data.get('version')!r}")
    try:
        hyperparams = KernelHyperparams(
            log_signal_std=float(data['log_signal_std']),
            log_lengthscales=tuple(float(v) for v in data['log_lengthscales']),
            log_noise_std=float(data['log_noise_std']),
            kind=KernelKind.parse(data['kernel']),
        )
        train_x = np.array(data['train_x'], dtype=float)
        train_y = np.array(data['train_y_centered'], dtype=float)
        scale = np.array(data['input_scale'], dtype=float)
        y_mean = float(data['y_mean'])
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"malformed model document: {e}")
    if train_x.ndim != 2 or len(train_x) != len(train_y):
        raise ModelFormatError("train_x and train_y_centered disagree in shape")
    model = assemble_model(train_x, train_y, y_mean, hyperparams, scale=scale,
                           nlml_value=data.get('nlml'))
    return model, dict(data.get('metadata') or {})


def save_model(model: GPModel, path: PathLike, metadata: Dict[str, Any] = None) -> Path:
    """写出模型；metadata 保存预测时需要的电压网格、方向、SG 参数"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(model_to_dict(model, metadata), f, indent=1)
    logger.info("💾 model saved: %s (N=%d, n=%d)", path, model.n_train, model.n_dims)
    return path


def load_model(path: PathLike) -> Tuple[GPModel, Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"model file not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path}: not valid JSON ({e})")
    if not isinstance(data, dict):
        raise ModelFormatError(f"{path}: top level must be an object")
    return model_from_dict(data)
