"""
错误类型定义

所有库函数只抛出 VillainError 的子类，由命令行入口统一捕获并转换为退出码。
"""
from typing import Optional


class VillainError(Exception):
    """工具包内所有错误的基类"""


class InvalidParameterError(VillainError):
    """参数不合法（n < 1、β ≤ 0、形式阶数错误、几何不匹配等）"""


class DegreeError(VillainError):
    """热浴更新的格点度数超过内核可枚举的上限"""

    def __init__(self, vertex: int, degree: int, limit: int):
        self.vertex = vertex
        self.degree = degree
        self.limit = limit
        super().__init__(f"顶点 {vertex} 的度数为 {degree}，超过热浴内核上限 {limit}")


class SolverError(VillainError):
    """线性求解失败，附带残差"""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message}（残差 {residual:.3e}）")


class NotClosedError(VillainError):
    """输入 1-形式不闭合，附带违反条件的面"""

    def __init__(self, face: int, value: float):
        self.face = face
        self.value = value
        super().__init__(f"1-形式不闭合：面 {face} 上 dh = {value:.3e}")


class TruncationError(VillainError):
    """截断或求积误差无法被证书控制"""

    def __init__(self, message: str, certificate: Optional[float] = None):
        self.certificate = certificate
        if certificate is not None:
            message = f"{message}（误差界 {certificate:.3e}）"
        super().__init__(message)


class SizeGuardError(VillainError):
    """状态空间或稠密矩阵超出规模上限"""


class ConfigError(VillainError):
    """配置错误，附带字段路径"""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"配置字段 '{field}': {message}")
