"""
Django settings for the smbforge project.

Simulation defaults live here (rather than in each module) so that every
entry point - the `smbforge` command, Celery workers, and the test suite -
resolves the same values. Each default may be overridden from the
environment.

For the full list of Django settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

# Build paths inside the project like this: os.path.join(BASE_DIR, ...)
import os

import sentry_sdk
from sentry_sdk.integrations.celery import CeleryIntegration
from sentry_sdk.integrations.django import DjangoIntegration


SECRET_KEY = os.getenv('DJANGO_SECRET_KEY',
                       '*this-is-obviously-not-secure-only-use-it-locally*')

BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
PROJECT_ROOT = os.path.normpath(os.path.dirname(os.path.abspath(__file__)))

# Parameter blocks shipped with the project (reference system, published designs)
BUNDLED_CONFIG_DIR = os.path.join(PROJECT_ROOT, 'configs')

if os.environ.get('SMB_TEST_CONFIG'):
    from smb.conf.test_settings import *
elif os.environ.get('SMB_DJANGO_LOCAL'):
    from smb.conf.local_settings import *
else:
    from smb.conf.production_settings import *

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.getenv('DATABASE_NAME',
                          os.path.join(BASE_DIR, 'smbforge.sqlite3')),
    },
}

DEFAULT_AUTO_FIELD = 'django.db.models.AutoField'


# Celery settings
# Without a broker, tasks run in-process (the `--threads` pool handles fan-out)

CELERY_BROKER_URL = os.getenv('CELERY_BROKER_URL', 'memory://')
CELERY_RESULT_BACKEND = os.getenv('CELERY_RESULT_BACKEND', 'cache+memory://')
CELERY_TASK_ALWAYS_EAGER = not os.getenv('CELERY_BROKER_URL')
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_ACCEPT_CONTENT = ['json']
CELERY_TIMEZONE = 'UTC'

# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Project-specific settings

# Grid, tolerances and step limits of the column integrator
SMB_SOLVER_DEFAULTS = {
    'Nz': int(os.getenv('SMB_NZ', 40)),
    'Nr': int(os.getenv('SMB_NR', 10)),
    'abstol': float(os.getenv('SMB_ABSTOL', 1e-10)),
    'reltol': float(os.getenv('SMB_RELTOL', 1e-6)),
    'h0': 1e-14,
    'hmax': 5e6,
    'dt_sample': 1.0,  # Batch chromatograms [s]
    'samples_per_switch': 200,  # SMB outlet records, t_s / 200
}

# Impurity threshold for batch pooling [mol/m3]
SMB_POOL_THRESHOLD = float(os.getenv('SMB_POOL_THRESHOLD', 7.5e-5))

# Cyclic steady state
SMB_CSS_TOLERANCE = float(os.getenv('SMB_CSS_TOLERANCE', 1e-5))
SMB_MAX_SWITCHES = int(os.getenv('SMB_MAX_SWITCHES', 300))
SMB_CSS_NORM = 1

SMB_OPTIMIZER_DEFAULTS = {
    'samples': 300,
    'burn_in': 0.5,
    'chains': 1,
    'proposal_scale': 0.05,  # Fraction of the box width
    'dr_scale': 0.25,
    'adapt_start': 100,
    'adapt_interval': 50,
    'penalty_schedule': [1.0, 10.0, 100.0, 1000.0, 10000.0],
    'nonconvergence_penalty': 10.0,
    'geweke_first': 0.1,
    'geweke_last': 0.5,
    'geweke_tol': 1e-4,
    'geweke_interval': 100,
}

SMB_OUTPUT_DIR = os.getenv('SMB_OUTPUT_DIR', os.path.join(BASE_DIR, 'out'))

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'level': os.getenv('SMB_LOG_LEVEL', 'INFO'),
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
        'file': {
            'level': 'ERROR',
            'class': 'logging.FileHandler',
            'filename': os.getenv('SMB_ERROR_FILE', '/tmp/smbforge_errors.log'),
            'delay': True,
        },
    },
    'loggers': {
        'django': {
            'handlers': ['file'],
            'level': 'ERROR',
            'propagate': True,
        },
        'smb': {
            'handlers': ['console', 'file'],
            'level': os.getenv('SMB_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}


SENTRY_DSN = os.getenv('SENTRY_DSN')  # If absent, nothing happens
if SENTRY_DSN:
    sentry_sdk.init(SENTRY_DSN,
                    integrations=[DjangoIntegration(), CeleryIntegration()])
