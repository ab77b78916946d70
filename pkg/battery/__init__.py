# 🔋 GV曲线处理
# 数据导入、SG平滑、特征提取、IC/DV基线、合成数据

__version__ = "0.1.0"

from .errors import (
    DataFormatError,
    NonGalvanostaticError,
    NonMonotoneTimeError,
    RangeNotCoveredError,
    SegmentTooShortError,
)
from .dataio import (
    CellRecord,
    Dataset,
    Direction,
    GVCurve,
    coulomb_count,
    load_dataset,
    read_curve_csv,
    write_dataset,
)
from .smoothing import SGConfig, SmoothedCurve, resample_uniform, sg_smooth, smooth_curve
from .features import (
    ExtractionConfig,
    FeatureSample,
    TrainingSet,
    build_training_set,
    cut_online_segment,
    extract_features,
    resolve_voltage_grid,
)
from .icdv import PeakFeature, compute_dv, compute_ic, extract_icdv_features, largest_peak
from .synth import SynthCellSpec, generate_curve, generate_dataset

__all__ = [
    'DataFormatError',
    'NonGalvanostaticError',
    'NonMonotoneTimeError',
    'RangeNotCoveredError',
    'SegmentTooShortError',
    'CellRecord',
    'Dataset',
    'Direction',
    'GVCurve',
    'coulomb_count',
    'load_dataset',
    'read_curve_csv',
    'write_dataset',
    'SGConfig',
    'SmoothedCurve',
    'resample_uniform',
    'sg_smooth',
    'smooth_curve',
    'ExtractionConfig',
    'FeatureSample',
    'TrainingSet',
    'build_training_set',
    'cut_online_segment',
    'extract_features',
    'resolve_voltage_grid',
    'PeakFeature',
    'compute_dv',
    'compute_ic',
    'extract_icdv_features',
    'largest_peak',
    'SynthCellSpec',
    'generate_curve',
    'generate_dataset',
]
