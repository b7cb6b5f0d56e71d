# Villain 模型 / 库仑气体 / 整数值 GFF 模拟与验证工具包

__version__ = "0.1.0"
