#!/usr/bin/env python3
# 📏 评估指标 - 测试用例

import numpy as np
import pytest

from evaluation.metrics import calibration_score, gaussian_coverage, rmspe


class TestRMSPE:
    """RMSPE 测试"""

    def test_perfect(self):
        assert rmspe([(0.74, 0.74), (0.7, 0.7)]) == 0.0

    def test_single(self):
        assert rmspe([(1.1, 1.0)]) == pytest.approx(10.0)

    def test_symmetric_errors(self):
        assert rmspe([(0.9, 1.0), (1.1, 1.0)]) == pytest.approx(10.0)
        assert rmspe([(1.02, 1.0), (0.98, 1.0)]) == pytest.approx(2.0)

    def test_relative_to_truth(self):
        """误差按真实容量归一化"""
        assert rmspe([(0.74, 0.74), (2.2, 2.0)]) == pytest.approx(100 * np.sqrt(0.01 / 2))

    def test_empty(self):
        with pytest.raises(ValueError):
            rmspe([])

    def test_nonpositive_truth(self):
        with pytest.raises(ValueError):
            rmspe([(1.0, 0.0)])


class TestCalibrationScore:
    """校准分数测试"""

    def test_zero_residuals(self):
        assert calibration_score([(0.7, 0.01, 0.7), (0.6, 1e-4, 0.6)], k=2.0) == 1.0

    def test_strict_inequality(self):
        """|ŷ − y| 恰好等于 kσ 不计入"""
        triples = [(1.5, 0.25, 1.0), (1.25, 0.25, 1.0)]
        assert calibration_score(triples, k=2.0) == 0.5

    def test_monotone_in_k(self):
        rng = np.random.default_rng(0)
        triples = [(y + e, 0.01, y) for y, e in zip(rng.uniform(0.5, 1, 200),
                                                   rng.normal(0, 0.01, 200))]
        assert calibration_score(triples, 0.67) <= calibration_score(triples, 2.0)

    def test_monte_carlo_gaussian(self):
        """残差严格高斯时 CS_2σ ≈ 0.954"""
        rng = np.random.default_rng(42)
        truth = rng.uniform(0.5, 2.0, 100_000)
        sigma = rng.uniform(0.01, 0.05, 100_000)
        estimate = truth + sigma * rng.normal(size=100_000)
        score = calibration_score(zip(estimate, sigma, truth), k=2.0)
        assert score == pytest.approx(0.954, abs=0.005)
        print(f"✓ Monte Carlo CS_2σ = {score:.4f}")

    def test_gaussian_reference(self):
        assert gaussian_coverage(2.0) == pytest.approx(0.9545, abs=1e-4)
        assert gaussian_coverage(0.67) == pytest.approx(0.497, abs=1e-3)

    def test_invalid(self):
        with pytest.raises(ValueError):
            calibration_score([])
        with pytest.raises(ValueError):
            calibration_score([(1.0, -0.1, 1.0)])
