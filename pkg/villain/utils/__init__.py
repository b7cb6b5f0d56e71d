# 标记utils目录为Python包
