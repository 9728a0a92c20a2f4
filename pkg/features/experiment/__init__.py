#!/usr/bin/env python3
"""
实验功能模块 - 扫描进度与结果汇总
"""
from .experiment_interface import ExperimentInterface

__all__ = ['ExperimentInterface']
