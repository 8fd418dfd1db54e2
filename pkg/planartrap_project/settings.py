"""
Django settings for planartrap_project project.

The project hosts a single application, ``planar_trap``, whose management
commands form the toolkit's command-line surface. There are no views, models
or templates; Django supplies configuration, logging, the command framework
and the test runner.
"""

from pathlib import Path
import os
from dotenv import load_dotenv

load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('SECRET_KEY', 'django-insecure-planar-trap-toolkit-local-key')

DEBUG = os.environ.get('DEBUG', 'True').lower() == 'true'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    'planar_trap',
]

# Only needed by the test runner; the toolkit itself stores nothing.
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging
LOG_LEVEL = os.environ.get('TRAP_LOG_LEVEL', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'planar_trap': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}


# Celery Configuration
# Tasks run in-process unless a broker is explicitly enabled.
REDIS_URL = os.environ.get('REDIS_URL', 'redis://localhost:6379/0')

CELERY_BROKER_URL = REDIS_URL
CELERY_RESULT_BACKEND = REDIS_URL
CELERY_ACCEPT_CONTENT = ['json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TIMEZONE = 'UTC'
CELERY_TASK_ALWAYS_EAGER = os.environ.get('CELERY_TASK_ALWAYS_EAGER', 'True').lower() == 'true'
CELERY_TASK_EAGER_PROPAGATES = True


# Run defaults for the trap toolkit. Config files and command flags override these.
TRAP_DEFAULTS = {
    'layout': 'paper',
    'amplitude_v': 140.0,
    'frequency_hz': 20.6e6,
    'ion': 'ca40',
    'axial_frequency_hz': 1.069e6,
    'bound_v': 40.0,
    'allowed': ['centre', 'dc_L3', 'dc_L4', 'dc_L5', 'dc_R3', 'dc_R4', 'dc_R5'],
    'regularization': 1e-4,
    'pair_segments': True,
    'max_refinements': 3,
    'seed_height_m': 150e-6,
    'depth_box_m': 5e-3,
    'output_dir': os.environ.get('TRAP_OUTPUT_DIR', str(BASE_DIR / 'trap_output')),
    'formats': 'both',
    'seed': int(os.environ.get('TRAP_SEED', '0')),
    'montecarlo_runs': 100,
}
