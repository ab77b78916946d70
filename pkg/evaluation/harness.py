"""
🔁 留一电芯交叉验证 v0.1.0
每个电芯轮流作测试集，其余电芯的全部曲线作训练集

在线测试按 (v_l, Δt) 从测试曲线上截取，V_h 逐样本确定；
同一折内超参数只优化一次（标准化单位），各电压网格用它条件化。
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from threading import Lock
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from battery.dataio import Dataset, Direction
from battery.features import (
    CurveKey,
    ExtractionConfig,
    TrainingSet,
    build_training_set,
    cut_online_segment,
    extract_features,
    resolve_voltage_grid,
    smooth_dataset,
    voltage_grid,
)
from battery.icdv import icdv_feature_table
from battery.smoothing import SGConfig, SmoothedCurve, smooth_curve
from gpr.kernels import KernelHyperparams
from gpr.regression import GPConfig, GPModel, condition, fit, input_scale

from .metrics import calibration_score, gaussian_coverage, rmspe

logger = logging.getLogger(__name__)

GRID_QUANTUM = 1e-3  # V_h 量化步长 (1 mV)
REFIT_MODES = ('fold', 'grid')
METHOD_GP_ICE = 'gp-ice'
METHOD_ICDV = 'ic+dv'
CS_LEVELS = (0.67, 2.0)

T = TypeVar('T')
R = TypeVar('R')


# ============ 结果类型 ============

@dataclass(frozen=True)
class CellPrediction:
    cell_id: str
    curve_id: str
    y: float  # 真实容量
    yhat: float
    sigma: float
    v_h: float = math.nan  # 该样本解析出的网格上端
    sg_window: Optional[int] = None  # 在线片段实际使用的 SG 窗口


@dataclass(frozen=True)
class FittedHyperparams:
    test_cell_id: str
    v_h: float
    hyperparams: KernelHyperparams  # 秒
    nlml: Optional[float]
    n_train: int
    source: str  # 'fit' | 'refit'


@dataclass
class FoldResult:
    test_cell_id: str
    train_cell_ids: Tuple[str, ...] = ()
    predictions: List[CellPrediction] = field(default_factory=list)
    hyperparams: List[FittedHyperparams] = field(default_factory=list)
    excluded: Dict[str, int] = field(default_factory=dict)  # 网格上端 → 被排除的训练曲线数
    skipped: List[Tuple[str, str]] = field(default_factory=list)  # (curve_id, 原因)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class EvaluationReport:
    label: str
    method: str
    folds: List[FoldResult]
    config: Dict[str, Any]

    @property
    def predictions(self) -> List[CellPrediction]:
        return [p for fold in self.folds for p in fold.predictions]

    @property
    def failed_folds(self) -> List[FoldResult]:
        return [fold for fold in self.folds if not fold.ok]

    @property
    def overall_rmspe(self) -> float:
        """全部预测合并后计算，不是各电芯 RMSPE 的平均"""
        predictions = self.predictions
        if not predictions:
            return math.nan
        return rmspe((p.yhat, p.y) for p in predictions)

    @property
    def per_cell_rmspe(self) -> Dict[str, float]:
        return {fold.test_cell_id: rmspe((p.yhat, p.y) for p in fold.predictions)
                for fold in self.folds if fold.predictions}

    def calibration(self, k: float) -> float:
        predictions = self.predictions
        if not predictions:
            return math.nan
        return calibration_score(((p.yhat, p.sigma, p.y) for p in predictions), k)

    @property
    def cs_067(self) -> float:
        return self.calibration(0.67)

    @property
    def cs_2(self) -> float:
        return self.calibration(2.0)

    def assert_no_leakage(self) -> None:
        """任何一折的训练集都不含测试电芯"""
        for fold in self.folds:
            if fold.test_cell_id in fold.train_cell_ids:
                raise AssertionError(f"fold '{fold.test_cell_id}' trained on its own test cell")
            strays = [p.curve_id for p in fold.predictions if p.cell_id != fold.test_cell_id]
            if strays:
                raise AssertionError(f"fold '{fold.test_cell_id}' predicted foreign curves {strays}")

    def summary_row(self) -> Dict[str, Any]:
        n_skipped = sum(len(f.skipped) for f in self.folds)
        return {
            'label': self.label,
            'method': self.method,
            'delta_t': self.config.get('extraction', {}).get('delta_t'),
            'v_l': self.config.get('extraction', {}).get('v_l'),
            'v_h': self.config.get('extraction', {}).get('v_h'),
            'n': self.config.get('extraction', {}).get('n'),
            'rmspe': self.overall_rmspe,
            'cs_0.67sigma': self.cs_067,
            'cs_2sigma': self.cs_2,
            'cs_0.67sigma_gaussian': gaussian_coverage(0.67),
            'cs_2sigma_gaussian': gaussian_coverage(2.0),
            'n_predictions': len(self.predictions),
            'n_skipped': n_skipped,
            'n_failed_folds': len(self.failed_folds),
        }


# ============ 工具 ============

def infer_direction(dataset: Dataset) -> Direction:
    directions = {curve.direction for curve, _ in dataset.samples()}
    if len(directions) != 1:
        raise ValueError("dataset mixes charge and discharge curves; set direction explicitly")
    return directions.pop()


def fold_seed(seed: int, fold_index: int) -> int:
    return int(np.random.default_rng([seed, fold_index]).integers(2 ** 31 - 1))


def quantise_top(v_l: float, v_h: float, quantum: float = GRID_QUANTUM) -> float:
    """V_h 向 v_l 截断到 quantum；截断后区间为空时保留原值"""
    steps = math.floor(abs(v_h - v_l) / quantum + 1e-9)
    if steps < 1:
        return float(v_h)
    sign = 1.0 if v_h > v_l else -1.0
    return round(v_l + sign * steps * quantum, 9)


def run_parallel(function: Callable[[T], R], items: Iterable[T], jobs: int = 1) -> List[R]:
    """按输入顺序返回结果"""
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(function, items))


class TrainingCache:
    """按电压网格缓存全数据集的训练样本，各折再去掉测试电芯"""

    def __init__(self, dataset: Dataset, extraction: ExtractionConfig, sg: SGConfig,
                 direction: Direction, smoothed: Dict[CurveKey, SmoothedCurve],
                 enabled: bool = True):
        self.dataset = dataset
        self.extraction = extraction
        self.sg = sg
        self.direction = direction
        self.smoothed = smoothed
        self.enabled = enabled
        self._sets: Dict[Tuple[float, ...], TrainingSet] = {}
        self._lock = Lock()

    def full(self, voltages: np.ndarray) -> TrainingSet:
        key = tuple(float(v) for v in voltages)
        if self.enabled:
            with self._lock:
                cached = self._sets.get(key)
            if cached is not None:
                return cached
        training = build_training_set(self.dataset, self.extraction, voltages, self.sg,
                                      self.direction, smoothed=self.smoothed)
        if self.enabled:
            with self._lock:
                training = self._sets.setdefault(key, training)
        return training

    def for_fold(self, voltages: np.ndarray, test_cell_id: str) -> TrainingSet:
        full = self.full(voltages)
        samples = [s for s in full.samples if s.cell_id != test_cell_id]
        excluded = [e for e in full.excluded if e[0] != test_cell_id]
        if not samples:
            raise ValueError(f"no training curve outside '{test_cell_id}' covers "
                             f"{self.extraction.v_l} -> {voltages[-1]} V")
        return TrainingSet(samples=samples, voltages=full.voltages, excluded=excluded)


# ============ GP-ICE ============

@dataclass(frozen=True)
class _TestInput:
    curve_id: str
    y: float
    voltages: np.ndarray
    x: np.ndarray
    sg_window: Optional[int]

    @property
    def key(self) -> float:
        return float(self.voltages[-1])


def _online_inputs(dataset: Dataset, cell_id: str, extraction: ExtractionConfig, sg: SGConfig,
                   direction: Direction, smoothed: Dict[CurveKey, SmoothedCurve]
                   ) -> Tuple[List[_TestInput], List[Tuple[str, str]]]:
    """测试电芯每条曲线 → 在线片段 → 电压网格与输入 x"""
    inputs: List[_TestInput] = []
    skipped: List[Tuple[str, str]] = []
    cell = dataset.cell(cell_id)
    for curve, capacity in zip(cell.curves, cell.capacities):
        full = smoothed.get((cell_id, curve.curve_id))
        if full is None:
            skipped.append((curve.curve_id, "curve too short to smooth"))
            continue
        try:
            if extraction.v_h is not None:
                voltages = voltage_grid(extraction.v_l, extraction.v_h, extraction.n)
                source, window = full, full.window_length
            else:
                segment = cut_online_segment(curve, full, extraction.v_l, extraction.delta_t,
                                             direction)
                source = smooth_curve(segment, sg, clamp=True)
                window = source.window_length
                top = resolve_voltage_grid(extraction, source, direction)[-1]
                voltages = voltage_grid(extraction.v_l, quantise_top(extraction.v_l, top),
                                        extraction.n)
            x = extract_features(source, voltages, extraction.v_l, direction)
        except ValueError as e:
            skipped.append((curve.curve_id, str(e)))
            continue
        inputs.append(_TestInput(curve.curve_id, capacity, voltages, x, window))
    if skipped:
        logger.info("⏭️ cell %s: %d test curve(s) skipped", cell_id, len(skipped))
    return inputs, skipped


def _evaluate_fold(index: int, cell_id: str, dataset: Dataset, extraction: ExtractionConfig,
                   sg: SGConfig, gp: GPConfig, seed: int, direction: Direction,
                   smoothed: Dict[CurveKey, SmoothedCurve], cache: TrainingCache,
                   refit: str, use_cache: bool) -> FoldResult:
    result = FoldResult(test_cell_id=cell_id)
    tests, result.skipped = _online_inputs(dataset, cell_id, extraction, sg, direction, smoothed)
    if not tests:
        raise ValueError(f"cell '{cell_id}': no test curve yields an online segment")
    seed_for_fold = fold_seed(seed, index)
    train_cells = set()

    # 参考网格: 测试样本 V_h 的中位数
    ordered = sorted(tests, key=lambda t: t.key)
    reference = ordered[len(ordered) // 2]
    reference_train = cache.for_fold(reference.voltages, cell_id)
    reference_model = fit(reference_train.x, reference_train.y, gp, seed=seed_for_fold)
    theta = reference_model.standardised_hyperparams()
    train_cells.update(reference_train.cell_ids)
    result.hyperparams.append(FittedHyperparams(cell_id, reference.key,
                                                reference_model.hyperparams,
                                                reference_model.nlml, len(reference_train), 'fit'))

    def build(test: _TestInput) -> GPModel:
        training = cache.for_fold(test.voltages, cell_id)
        train_cells.update(training.cell_ids)
        result.excluded[f"{test.key:.9g}"] = len(training.excluded)
        scaled = theta.rescaled(input_scale(training.x, theta.isotropic))
        if refit == 'grid':
            model = fit(training.x, training.y, replace(gp, restarts=1), init=scaled,
                        seed=seed_for_fold)
            if all(h.v_h != test.key or h.source != 'refit' for h in result.hyperparams):
                result.hyperparams.append(FittedHyperparams(cell_id, test.key, model.hyperparams,
                                                            model.nlml, len(training), 'refit'))
            return model
        return condition(training.x, training.y, scaled)

    models: Dict[float, GPModel] = {}
    for test in tests:
        try:
            if use_cache:
                if test.key not in models:
                    models[test.key] = build(test)
                model = models[test.key]
            else:
                model = build(test)
        except ValueError as e:
            result.skipped.append((test.curve_id, str(e)))
            continue
        prediction = model.predict(test.x)
        result.predictions.append(CellPrediction(cell_id, test.curve_id, test.y,
                                                 prediction.mean, prediction.std,
                                                 test.key, test.sg_window))
    if not result.predictions:
        raise ValueError(f"cell '{cell_id}': no prediction could be made")
    result.train_cell_ids = tuple(sorted(train_cells))
    return result


def _snapshot(dataset: Dataset, method: str, sg: SGConfig, gp: GPConfig, seed: int,
              direction: Direction, **extra) -> Dict[str, Any]:
    snapshot = {'method': method, 'dataset': dataset.name, 'n_cells': dataset.n_cells,
                'n_samples': dataset.n_samples, 'direction': direction.value,
                'sg': sg.to_dict(), 'gp': gp.to_dict(), 'seed': seed}
    snapshot.update(extra)
    return snapshot


def _run_folds(dataset: Dataset, evaluate: Callable[[int, str], FoldResult],
               keep_going: bool, jobs: int) -> List[FoldResult]:
    def run(item: Tuple[int, str]) -> FoldResult:
        index, cell_id = item
        try:
            fold = evaluate(index, cell_id)
        except (ValueError, RuntimeError) as e:
            if not keep_going:
                raise
            logger.warning("❌ fold %s failed: %s", cell_id, e)
            return FoldResult(test_cell_id=cell_id, error=str(e))
        logger.info("✅ fold %s: %d prediction(s)", cell_id, len(fold.predictions))
        return fold

    return run_parallel(run, enumerate(dataset.cell_ids), jobs)


def leave_one_cell_out(dataset: Dataset, extraction: ExtractionConfig,
                       sg: SGConfig = SGConfig(), gp: GPConfig = GPConfig(), seed: int = 0,
                       direction: Optional[Direction] = None, refit: str = 'fold',
                       use_cache: bool = True, keep_going: bool = False, jobs: int = 1,
                       smoothed: Optional[Dict[CurveKey, SmoothedCurve]] = None,
                       label: Optional[str] = None) -> EvaluationReport:
    """GP-ICE 留一电芯评估"""
    if dataset.n_cells < 2:
        raise ValueError(f"leave-one-cell-out needs >= 2 cells, got {dataset.n_cells}")
    if refit not in REFIT_MODES:
        raise ValueError(f"refit must be one of {REFIT_MODES}, got {refit!r}")
    direction = Direction.parse(direction) if direction is not None else infer_direction(dataset)
    extraction.check_direction(direction)
    if smoothed is None:
        smoothed = smooth_dataset(dataset, sg, jobs)
    cache = TrainingCache(dataset, extraction, sg, direction, smoothed, enabled=use_cache)

    def evaluate(index: int, cell_id: str) -> FoldResult:
        return _evaluate_fold(index, cell_id, dataset, extraction, sg, gp, seed, direction,
                              smoothed, cache, refit, use_cache)

    folds = _run_folds(dataset, evaluate, keep_going, jobs)
    label = label or _extraction_label(extraction)
    report = EvaluationReport(
        label=label, method=METHOD_GP_ICE, folds=folds,
        config=_snapshot(dataset, METHOD_GP_ICE, sg, gp, seed, direction,
                         extraction=extraction.to_dict(), refit=refit),
    )
    report.assert_no_leakage()
    logger.info("📊 %s: RMSPE %.3f%%, CS_2σ %.3f", label, report.overall_rmspe, report.cs_2)
    return report


def _extraction_label(extraction: ExtractionConfig) -> str:
    if extraction.v_h is not None:
        return f"v_l={extraction.v_l:g},v_h={extraction.v_h:g},n={extraction.n}"
    return f"dt={extraction.delta_t:g},v_l={extraction.v_l:g},n={extraction.n}"


# ============ IC+DV 基线 ============

def leave_one_cell_out_icdv(dataset: Dataset, sg: SGConfig = SGConfig(),
                            gp: GPConfig = GPConfig(), seed: int = 0,
                            smoothed: Optional[Dict[CurveKey, SmoothedCurve]] = None,
                            keep_going: bool = False, jobs: int = 1,
                            label: str = 'IC+DV') -> EvaluationReport:
    """完整参考曲线的 IC/DV 最大峰 → 同一个 GP"""
    if dataset.n_cells < 2:
        raise ValueError(f"leave-one-cell-out needs >= 2 cells, got {dataset.n_cells}")
    direction = infer_direction(dataset)
    table, failed = icdv_feature_table(dataset, sg, smoothed)
    capacities = {(curve.cell_id, curve.curve_id): capacity
                  for curve, capacity in dataset.samples()}
    keys = [(curve.cell_id, curve.curve_id) for curve, _ in dataset.samples()]

    def evaluate(index: int, cell_id: str) -> FoldResult:
        train_keys = [k for k in keys if k[0] != cell_id and k in table]
        if len(train_keys) < 2:
            raise ValueError(f"fold '{cell_id}': fewer than 2 training curves with IC/DV peaks")
        x = np.vstack([table[k].as_vector() for k in train_keys])
        y = np.array([capacities[k] for k in train_keys])
        model = fit(x, y, gp, seed=fold_seed(seed, index))
        result = FoldResult(
            test_cell_id=cell_id,
            train_cell_ids=tuple(sorted({k[0] for k in train_keys})),
            hyperparams=[FittedHyperparams(cell_id, math.nan, model.hyperparams, model.nlml,
                                           len(train_keys), 'fit')],
            excluded={METHOD_ICDV: sum(1 for f in failed if f[0] != cell_id)},
            skipped=[(f[1], f[2]) for f in failed if f[0] == cell_id],
        )
        for key in (k for k in keys if k[0] == cell_id and k in table):
            prediction = model.predict(table[key].as_vector())
            result.predictions.append(CellPrediction(cell_id, key[1], capacities[key],
                                                     prediction.mean, prediction.std))
        if not result.predictions:
            raise ValueError(f"cell '{cell_id}': no curve has IC/DV peak features")
        return result

    folds = _run_folds(dataset, evaluate, keep_going, jobs)
    report = EvaluationReport(label=label, method=METHOD_ICDV, folds=folds,
                              config=_snapshot(dataset, METHOD_ICDV, sg, gp, seed, direction))
    report.assert_no_leakage()
    logger.info("📊 %s: RMSPE %.3f%%, CS_2σ %.3f", label, report.overall_rmspe, report.cs_2)
    return report
