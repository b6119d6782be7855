# config.py
import os
import logging
from dotenv import load_dotenv

logger = logging.getLogger(__name__)

# Try to load .env file if exists locally
try:
    load_dotenv()
    logger.info("Loaded environment variables from .env file")
except Exception as e:
    logger.warning(f"Failed to load .env file: {str(e)}")
    logger.info("Will use environment variables directly")


def _env_float(name, default):
    """Read a float setting, falling back to the default on bad input"""
    raw = os.environ.get(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        return float(raw)
    except ValueError:
        logger.warning(f"Invalid value for {name}: {raw!r}, using {default}")
        return default


def _env_int(name, default):
    """Read an integer setting, falling back to the default on bad input"""
    raw = os.environ.get(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        return int(raw)
    except ValueError:
        logger.warning(f"Invalid value for {name}: {raw!r}, using {default}")
        return default


# Dataset augmentation constant appended to every sample (x <- y [x, B])
B_CONST = _env_float('ACPATH_B_CONST', 0.01)

# Numerical tolerances
TOL_FEAS = _env_float('ACPATH_TOL_FEAS', 1e-9)
TOL_RANK = _env_float('ACPATH_TOL_RANK', 1e-8)
TOL_KKT = _env_float('ACPATH_TOL_KKT', 1e-6)
TOL_PARALLEL = _env_float('ACPATH_TOL_PARALLEL', 1e-12)

# Dual coordinate descent oracle
ORACLE_TOL = _env_float('ACPATH_ORACLE_TOL', 1e-10)
ORACLE_MAX_ITER = _env_int('ACPATH_ORACLE_MAX_ITER', 200000)
ORACLE_POLISH_MAX_ITER = _env_int('ACPATH_ORACLE_POLISH_MAX_ITER', 20000)
# epochs per point in the validation suite; unconverged points are skipped
ORACLE_VALIDATE_MAX_ITER = _env_int('ACPATH_ORACLE_VALIDATE_MAX_ITER', 1000)

# Exploration
MAX_LAYERS_PER_SAMPLE = _env_int('ACPATH_MAX_LAYERS_PER_SAMPLE', 50)
PATH_EXTENT = _env_float('ACPATH_PATH_EXTENT', 1e6)  # stands in for infinity
PARALLEL_WORKERS = _env_int('ACPATH_PARALLEL_WORKERS', 4)
MAX_RESTARTS = _env_int('ACPATH_MAX_RESTARTS', 10)
# doubling steps taken across a frontier edge when reseeding
RESTART_STEPS = _env_int('ACPATH_RESTART_STEPS', 30)
DEFAULT_SEED = _env_int('ACPATH_SEED', 0)

# Logging
LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
LOG_FILE = os.getenv('ACPATH_LOG_FILE', 'acpath.log')
LOG_DIR = os.getenv('ACPATH_LOG_DIR', 'logs')

# Rendering
SVG_SIZE = _env_int('ACPATH_SVG_SIZE', 800)
EVENT_COLOURS = {
    0: '#00bcd4',  # M <-> O
    1: '#e53935',  # M <-> I
}
LAYER_COLOURS = ['#90caf9', '#a5d6a7']
