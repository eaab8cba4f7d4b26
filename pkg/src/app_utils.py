import logging
import os
import warnings

import numpy as np
from dotenv import load_dotenv

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'


def load_environment():
    """Load optional overrides from a .env file into os.environ."""
    load_dotenv()
    return {
        'log_level': os.getenv('PERSUASION_LOG_LEVEL', 'INFO').upper(),
        'out_dir': os.getenv('PERSUASION_OUT_DIR'),
    }


def configure_logging(level='INFO'):
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT,
        datefmt=LOG_DATEFMT,
        force=True,
    )


def suppress_numeric_warnings():
    # power laws are probed right next to a = 0 while bracketing
    np.seterr(divide='ignore', over='ignore', invalid='ignore')
    warnings.filterwarnings('ignore', category=RuntimeWarning,
                            message='invalid value encountered in power')
    warnings.filterwarnings('ignore', category=RuntimeWarning,
                            message='divide by zero encountered in power')
