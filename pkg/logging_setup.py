# logging_setup.py
import logging
import os
from datetime import datetime
from config import LOG_LEVEL, LOG_FILE, LOG_DIR


def setup_logging(level=None, to_file=True):
    """
    Set up logging configuration

    Args:
        level (str, optional): Level name overriding LOG_LEVEL
        to_file (bool): Also write a timestamped log file under LOG_DIR

    Returns:
        logging.Logger: Logger for the calling module
    """
    handlers = [logging.StreamHandler()]

    if to_file:
        # Create logs directory if it doesn't exist
        if not os.path.exists(LOG_DIR):
            os.makedirs(LOG_DIR)

        # Create log file with timestamp
        timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
        log_filename = os.path.join(LOG_DIR, f"{timestamp}_{LOG_FILE}")
        handlers.insert(0, logging.FileHandler(log_filename))

    level_name = (level or LOG_LEVEL).upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True
    )

    # Set specific log levels for noisy libraries
    logging.getLogger('numexpr').setLevel(logging.WARNING)
    logging.getLogger('matplotlib').setLevel(logging.WARNING)

    return logging.getLogger(__name__)
