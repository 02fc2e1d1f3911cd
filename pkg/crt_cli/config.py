# 配置文件
class Config:
    """命令行配置类"""

    # 日志格式
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    DEFAULT_LOG_LEVEL = "INFO"

    # 退出码
    EXIT_OK = 0
    EXIT_USAGE = 1
    EXIT_CONFIG = 2
    EXIT_NUMERICAL = 3

    # 输出文件名
    DATASET_FILE = "dataset.bin"
    CHECKPOINT_FILE = "checkpoint.bin"
    LOSS_LOG_FILE = "loss_log.csv"
    REPORT_FILE = "report.txt"
    GRADCHECK_FILE = "gradcheck.txt"
    ANALYSIS_FILE = "analysis.txt"
    COMPARISON_FILE = "comparison.txt"
    EFFECTIVE_CONFIG_FILE = "effective_config.env"
    HEATMAP_DIR = "heatmaps"

    # 支持的配置文件后缀
    FLAT_SUFFIXES = [".env", ".conf", ".cfg"]
    YAML_SUFFIXES = [".yaml", ".yml"]
    JSON_SUFFIXES = [".json"]
