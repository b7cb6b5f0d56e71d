"""
命令行主入口点
"""
import os
import sys

# 将当前目录添加到Python路径
SCRIPT_DIR = os.path.dirname(os.path.abspath(__file__))
sys.path.append(SCRIPT_DIR)

from villain.cli import main
from villain.utils.config_loader import default_output_dir


# 确保输出目录存在
def ensure_output_directory() -> str:
    """确保默认输出目录存在（可由 VILLAIN_OUTPUT_DIR 覆盖）"""
    output_dir = default_output_dir()
    os.makedirs(output_dir, exist_ok=True)
    return output_dir


if __name__ == "__main__":
    ensure_output_directory()
    sys.exit(main())
