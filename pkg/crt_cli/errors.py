"""
命令行异常
"""

from typing import Optional

from tensor_autodiff.errors import CrtError


class ConfigError(CrtError, ValueError):
    """运行配置无效；携带出错的键与行号（行号未知时为 None）"""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        location = []
        if key is not None:
            location.append(f"键 {key}")
        if line is not None:
            location.append(f"第 {line} 行")
        super().__init__(f"{message}（{', '.join(location)}）" if location else message)
