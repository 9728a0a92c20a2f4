#!/usr/bin/env python3
"""
whitephase 版本号与求解后端信息

版本号写入每次运行的元数据，`whitephase version` 同时列出可用的求解后端。
"""
import importlib.metadata
import importlib.util
from pathlib import Path

import toml

PROJECT_NAME = "whitephase"
ROOT_DIR = Path(__file__).resolve().parent.parent


def get_version() -> str:
    """源码树里读 pyproject.toml，安装后读包元数据"""
    try:
        return toml.load(ROOT_DIR / "pyproject.toml")["project"]["version"]
    except (OSError, KeyError, toml.TomlDecodeError):
        try:
            return importlib.metadata.version(PROJECT_NAME)
        except importlib.metadata.PackageNotFoundError:
            return "0.1.0"


def solver_backends() -> list[str]:
    """可用的 MILP 后端；native 总是可用，highs 需要 scipy"""
    backends = ["native"]
    if importlib.util.find_spec("scipy") is not None:
        backends.append("highs")
    return backends


VERSION = get_version()
FULL_VERSION = f"v{VERSION}"
