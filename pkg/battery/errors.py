"""
⚠️ 异常类型
数据导入、特征提取共用的错误
"""

from typing import Optional, Sequence


class DataFormatError(ValueError):
    """文件格式或内容不合法（缺列、非数字、空曲线、时间倒序）"""

    def __init__(self, message: str, path: Optional[str] = None,
                 indices: Optional[Sequence[int]] = None):
        self.path = path
        self.indices = list(indices) if indices is not None else []
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class NonGalvanostaticError(ValueError):
    """电流不是恒流（变异系数 ≥ 1% 或符号翻转）"""

    def __init__(self, curve_id: str, cv: float):
        self.curve_id = curve_id
        self.cv = cv
        super().__init__(
            f"non-galvanostatic curve '{curve_id}': current CV = {cv:.4g} (limit 0.01)"
        )


class RangeNotCoveredError(ValueError):
    """曲线达不到要求的电压"""

    def __init__(self, required: float, max_voltage: float, source_id: str = ""):
        self.required = required
        self.max_voltage = max_voltage
        self.source_id = source_id
        where = f" '{source_id}'" if source_id else ""
        super().__init__(
            f"range-not-covered: curve{where} reaches {max_voltage:.6g} V, "
            f"needs {required:.6g} V"
        )


class SegmentTooShortError(ValueError):
    """曲线时长不够切出 Δt 的在线片段"""


class NonMonotoneTimeError(DataFormatError):
    """时间戳倒退，整条曲线被拒收；indices 为倒退的行号"""
