"""
Settings for the partialgait toolkit.

Values can be overridden through environment variables or a ``.env`` file
at the repository root.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent.parent

load_dotenv(BASE_DIR / '.env')

DATA_ROOT_ENV = 'GAITREID_DATA_ROOT'

N_JOBS = int(os.environ.get('GAITREID_N_JOBS', '1'))

# Canonical silhouette frame
SILHOUETTE_HEIGHT = 64
SILHOUETTE_WIDTH = 44
MIN_FOREGROUND = 16

# Synthetic canvas, before alignment
CANVAS_HEIGHT = 128
CANVAS_WIDTH = 96

# Training defaults (desk scale)
LEARNING_RATE = 1e-4
TRIPLET_MARGIN = 0.2
CHECKPOINT_EVERY = 100
LARGE_CHECKPOINT_EVERY = 1000

# CASIA-B protocol
CASIA_VIEWS = (0, 18, 36, 54, 72, 90, 108, 126, 144, 162, 180)
CASIA_CONDITIONS = {'NM': 6, 'BG': 2, 'CL': 2}
CASIA_TRAIN_IDENTITIES = 74

# Logging
LOG_LEVEL = os.environ.get('GAITREID_LOG_LEVEL', 'WARNING')
LOG_FORMAT = os.environ.get('GAITREID_LOG_FORMAT', 'json')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'json': {
            '()': 'pythonjsonlogger.json.JsonFormatter',
            'fmt': '%(asctime)s %(levelname)s %(name)s %(message)s',
        },
        'text': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'stderr': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': LOG_FORMAT if LOG_FORMAT in ('json', 'text') else 'json',
        },
    },
    'root': {
        'handlers': ['stderr'],
        'level': LOG_LEVEL,
    },
}
