"""
📏 评估指标
RMSPE 与校准分数 CS_kσ
"""

import math
from typing import Iterable, Tuple

import numpy as np
from scipy.special import erf


def rmspe(pairs: Iterable[Tuple[float, float]]) -> float:
    """100·sqrt(mean(((ŷ − y)/y)²))，pairs 为 (ŷ, y)"""
    data = np.array(list(pairs), dtype=float).reshape(-1, 2)
    if len(data) == 0:
        raise ValueError("RMSPE of an empty prediction list")
    estimate, truth = data[:, 0], data[:, 1]
    if np.any(truth <= 0):
        raise ValueError("RMSPE needs strictly positive true capacities")
    return float(100.0 * np.sqrt(np.mean(((estimate - truth) / truth) ** 2)))


def calibration_score(triples: Iterable[Tuple[float, float, float]], k: float = 2.0) -> float:
    """|ŷ − y| < k·σ 的比例（严格小于），triples 为 (ŷ, σ, y)"""
    data = np.array(list(triples), dtype=float).reshape(-1, 3)
    if len(data) == 0:
        raise ValueError("calibration score of an empty prediction list")
    estimate, sigma, truth = data.T
    if np.any(sigma < 0):
        raise ValueError("predictive std must be >= 0")
    return float(np.mean(np.abs(estimate - truth) < k * sigma))


def gaussian_coverage(k: float) -> float:
    """理想高斯下 ±kσ 内的概率，用作 CS 的参照"""
    return float(erf(k / math.sqrt(2.0)))
