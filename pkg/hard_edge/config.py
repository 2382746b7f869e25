"""
Configuration module for the hard-edge toolkit.
Contains environment-driven defaults and numeric settings shared by all modules.
"""

import os
import logging
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Precision settings
PRECISION_BITS = int(os.getenv("HARD_EDGE_PRECISION_BITS", "256"))
MAX_BITS = int(os.getenv("HARD_EDGE_MAX_BITS", "8192"))
TOLERANCE = float(os.getenv("HARD_EDGE_TOLERANCE", "1e-20"))

# Sweep / output settings
WORKERS = int(os.getenv("HARD_EDGE_WORKERS", "1"))
OUTPUT_DIR = os.getenv("HARD_EDGE_OUTPUT_DIR", "results")
LOG_LEVEL = os.getenv("HARD_EDGE_LOG_LEVEL", "INFO")

VERSION = "0.1.0"

# Spectral curve
LABEL_RADIUS = 1e6
TRACK_MIN_STEP = 1e-12
TRACK_MAX_STEPS = 20000

# Quadrature / series
TANH_SINH_MAX_LEVEL = 10
SERIES_MAX_TERMS = 20000

# Equilibrium solver
EQ_GRID_SIZE = 360
EQ_DOMAIN_CAP = 6.0
EQ_MAX_ITER = 4000
EQ_DENSITY_THRESHOLD = 1e-6
EQ_FIT_WINDOW = (0.002, 0.06)

# Global parametrix
COLLOCATION_RING_FACTOR = 1e3

# Meijer-G parametrix
CONFLUENT_GAP = 1e-10
CONFLUENT_SHIFT = 2.0 ** -24
MB_PIECE_LENGTH = 4.0

# Desk-scale ceilings
MAX_DESK_N = 64
MAX_DESK_BITS = 4096

# Verification suites run by `verify --suite all`
DEFAULT_SUITES = ["curve", "parametrix", "psi", "equilibrium", "kernels"]


def setup_logging(level: str = None):
    """Configure application logging."""
    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s'
    )
    return logging.getLogger("hard_edge")
