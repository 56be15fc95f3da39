"""
Django settings for the greedy_lab project.

Django is used here as the application frame of a numerical toolkit:
settings, logging, management commands, form validation of experiment
configs and template rendering of plots. There is no web surface.
"""

from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config(
    'SECRET_KEY',
    default='django-insecure-greedy-lab-offline-toolkit'
)

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = []

# Application definition
LOCAL_APPS = [
    'apps.hilbert',
    'apps.dictionary',
    'apps.greedy',
    'apps.analysis',
    'apps.learn',
    'apps.experiments',
]

INSTALLED_APPS = LOCAL_APPS

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [],
        },
    },
]

# No table is ever created; the entry only satisfies the test runner.
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

USE_I18N = False
USE_TZ = True
TIME_ZONE = config('TIME_ZONE', default='UTC')

# Application-specific settings
GREEDY_LAB = {
    'APP_NAME': 'Greedy Lab',
    'APP_VERSION': '1.0.0',
    'OUTPUT_DIR': config('GREEDY_LAB_OUTPUT_DIR', default='results'),
    'JOBS': config('GREEDY_LAB_JOBS', default=1, cast=int),
    'SVG': config('GREEDY_LAB_SVG', default=False, cast=bool),
    'KAPPA': config('GREEDY_LAB_KAPPA', default=1.0, cast=float),
    'A_EXP': config('GREEDY_LAB_A_EXP', default=1.0, cast=float),
    'MASTER_SEED': config('GREEDY_LAB_MASTER_SEED', default=20080101, cast=int),
    'LOG_LEVEL': config('GREEDY_LAB_LOG_LEVEL', default='INFO'),
}

# Logging Configuration
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'file': {
            'level': 'INFO',
            'class': 'logging.FileHandler',
            'filename': BASE_DIR / 'logs' / 'greedy_lab.log',
            'formatter': 'verbose',
        },
        'console': {
            'level': 'DEBUG' if DEBUG else GREEDY_LAB['LOG_LEVEL'],
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
    'loggers': {
        'django': {
            'handlers': ['console', 'file'],
            'level': 'WARNING',
            'propagate': False,
        },
        'apps': {
            'handlers': ['console', 'file'],
            'level': 'DEBUG' if DEBUG else GREEDY_LAB['LOG_LEVEL'],
            'propagate': False,
        },
    },
}

# Create logs directory if it doesn't exist
logs_dir = BASE_DIR / 'logs'
logs_dir.mkdir(exist_ok=True)
