"""All constants for Edge Squeeze."""

ROOT_LOGGER_NAME = "edge_squeeze"
VERSION = "0.1.0"

# model input, tiles are resized to this on materialization
INPUT_SIZE = 224
INPUT_CHANNELS = 3

# Xception widths that the squeeze passes start from
STEM_WIDTHS = (32, 64)
ENTRY_WIDTHS = (128, 256, 728)
MIDDLE_WIDTH = 728
EXIT_WIDTHS = (728, 1024, 1536, 2048)
MIDDLE_MODULE_COUNT = 8

# squeezed widths before calibration
SQUEEZED_ENTRY_WIDTHS = (64, 128, 256)
SQUEEZED_MIDDLE_WIDTH = 256
CALIBRATION_STEP = 32
CHANNEL_MULTIPLE = 8
MIN_CHANNELS = 8
FIRE_SQUEEZE_RATIO = 0.25

# total parameter count reported for the squeezed model, with tolerance
PARAM_TARGET = 11_200_000
PARAM_TOLERANCE = 0.10

MAXPOOL_WINDOW = 3
DEFAULT_DROPOUT_RATE = 0.2
BATCHNORM_EPSILON = 1e-3
BATCHNORM_MOMENTUM = 0.99

# dataset generation
DEFAULT_TARGET_COUNT = 20_000
DEFAULT_SPLIT_RATIO = (7, 2, 1)
DEFAULT_GRID = (10, 10)
DEFAULT_OVERLAP_THRESHOLD = 0.3

# checkpoint file layout
CHECKPOINT_MAGIC = b"ENFG"
CHECKPOINT_VERSION = 1

# run directory layout
CONFIG_ECHO_FILE = "config.echo"
GRAPH_FILE = "graph.jsonl"
MANIFEST_FILE = "manifest.jsonl"
HOLDOUT_FILE = "holdout.jsonl"
METRICS_FILE = "metrics.csv"
TELEMETRY_FILE = "telemetry.csv"
REPORT_FILE = "report.txt"
SUMMARY_FILE = "summary.json"
CHECKPOINT_DIR = "checkpoints"
LAST_CHECKPOINT = "last.ckpt"
BEST_CHECKPOINT = "best.ckpt"

# rendering colors
TRUTH_COLOR = (255, 255, 0)
PREDICTED_COLOR = (255, 0, 0)
STROKE_WIDTH = 3

# resource units
BYTES_PER_GB = float(1 << 30)
