#!/usr/bin/env python3
"""
统一日志管理模块
"""
import sys
from pathlib import Path

from loguru import logger

LOG_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} [{level}] [{extra[name]}] {message}"


class Logger:
    """统一日志管理器

    控制台输出到 stderr，实验单元可额外挂载文件日志（由调用方负责移除）。
    """

    def __init__(self, name: str = "whitephase", log_level: str = "INFO"):
        self.name = name
        self.log_level = log_level.upper()
        self._console_id: int | None = None
        self._file_ids: dict[str, int] = {}

        # 清除默认处理器
        logger.remove()
        logger.configure(extra={"name": self.name})
        self._add_console()

        self.logger = logger.bind(name=self.name)

    def _add_console(self):
        """添加控制台处理器"""
        self._console_id = logger.add(
            sys.stderr,
            level=self.log_level,
            format=LOG_FORMAT,
        )

    def set_log_level(self, level: str):
        """设置控制台日志级别"""
        self.log_level = level.upper()
        if self._console_id is not None:
            logger.remove(self._console_id)
        self._add_console()

    def add_file_sink(self, path: str | Path) -> int:
        """为某次运行添加文件日志

        Args:
            path: 日志文件路径

        Returns:
            处理器ID
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        sink_id = logger.add(
            str(path),
            level="DEBUG",  # 文件日志记录所有级别
            format=LOG_FORMAT,
            rotation="10 MB",
            retention="7 days",
            compression="zip",
        )
        self._file_ids[str(path)] = sink_id
        return sink_id

    def remove_file_sink(self, path: str | Path):
        """移除文件日志"""
        sink_id = self._file_ids.pop(str(Path(path)), None)
        if sink_id is not None:
            logger.remove(sink_id)

    def get_logger(self, name: str | None = None):
        """获取日志器实例

        Args:
            name: 日志器名称，如果提供则创建子日志器

        Returns:
            绑定了名称的loguru logger
        """
        if name:
            return logger.bind(name=f"{self.name}.{name}")
        return self.logger


# 创建全局日志实例
global_logger = Logger()


def get_logger(name: str | None = None):
    """获取日志器"""
    return global_logger.get_logger(name)


def set_log_level(level: str):
    """设置全局日志级别"""
    global_logger.set_log_level(level)


def add_file_sink(path: str | Path) -> int:
    """添加运行日志文件"""
    return global_logger.add_file_sink(path)


def remove_file_sink(path: str | Path):
    """移除运行日志文件"""
    global_logger.remove_file_sink(path)
