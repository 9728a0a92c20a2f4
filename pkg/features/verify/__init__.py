#!/usr/bin/env python3
"""
验收测试功能模块 - 测试组运行与报告
"""
from .verify_interface import VerifyInterface

__all__ = ['VerifyInterface']
