#!/usr/bin/env python3
"""
whitephase 核心模块
"""
from .errors import WhitePhaseError
from .logger import get_logger
from .version import VERSION

__all__ = [
    "VERSION",
    "WhitePhaseError",
    "get_logger",
]
