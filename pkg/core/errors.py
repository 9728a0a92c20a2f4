#!/usr/bin/env python3
"""
异常定义模块
"""


class WhitePhaseError(Exception):
    """仿真与控制相关异常的基类"""


class ScenarioError(WhitePhaseError):
    """场景文件解析或校验失败"""


class ProgramError(WhitePhaseError):
    """优化模型构建输入不合法（变量引用、时域长度等）"""


class SolverError(WhitePhaseError):
    """求解器硬失败"""


class AggregationError(WhitePhaseError):
    """投票聚合不可行（内部错误，全红方案总是可行）"""


class CellError(WhitePhaseError):
    """实验单元运行失败"""

    def __init__(self, cell: str, message: str):
        self.cell = cell
        self.message = message
        super().__init__(f"[{cell}] {message}")

    def __reduce__(self):
        return type(self), (self.cell, self.message)
