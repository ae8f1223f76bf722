"""
Django settings for the mmwrt project.

The project has no web surface: it is driven through management commands
(`trace`, `compare`, `sweep`, `qd_stats`) registered by the `raytrace` app.
Simulation defaults live in the MMWRT dict below.
"""

import os
from pathlib import Path

MMWRT = {
    "DEFAULT_TIMESTEP_S": 0.005,
    "DEFAULT_CARRIER_HZ": 60e9,
    "DEFAULT_BANDWIDTH_HZ": 400e6,
    "DEFAULT_NOISE_FIGURE_DB": 9.0,
    "NOISE_PSD_DBM_HZ": -174.0,
    "OUTAGE_FLOOR_DB": -40.0,
    "NRMSE_ACCEPTABLE": 0.05,
    "NS_REPETITIONS": 1000,
    "DEFAULT_JOBS": 1,
    "RL_CLAMP_DB": (7.0, 25.0),
}

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Scenario and material files shipped with the project
SCENARIO_DIR = BASE_DIR / 'scenarios'

SECRET_KEY = os.environ.get('MMWRT_SECRET_KEY', 'mmwrt-local-only-not-a-secret')

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'raytrace.apps.RaytraceConfig',
]

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'raytrace': {
            'handlers': ['console'],
            'level': os.environ.get('MMWRT_LOG_LEVEL', 'WARNING'),
            'propagate': False,
        },
    },
}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'
