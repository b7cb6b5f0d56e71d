# 标记commands目录为Python包，每个子命令一个模块
