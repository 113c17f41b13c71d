
import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent


SECRET_KEY = os.getenv('SECRET_KEY', 'canonical-weyl-local-only')

DEBUG=os.getenv('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = os.getenv('ALLOWED_HOSTS', '').split(',')

DJ_DEFAULT_INSTALLED_APPS=[
    'django.contrib.contenttypes',
    'django.contrib.auth',
]

THIRD_PARTY_APPS=[
    "rest_framework",
]

CORE_APPS = [
    'mainapps.hamiltonians',
    'mainapps.weyl_solver',
    'mainapps.estimator',
    'mainapps.spectral',
    'mainapps.strings_sl',
    'mainapps.sweeps',
]

INSTALLED_APPS =DJ_DEFAULT_INSTALLED_APPS+THIRD_PARTY_APPS+CORE_APPS

# Numerical defaults
CANONICAL_WEYL_Q=os.getenv('CANONICAL_WEYL_Q', '0.2')
CANONICAL_WEYL_EPS=os.getenv('CANONICAL_WEYL_EPS', '1e-8')
CANONICAL_WEYL_ROOT_TOL=os.getenv('CANONICAL_WEYL_ROOT_TOL', '1e-10')
CANONICAL_WEYL_SPLIT_CAP=os.getenv('CANONICAL_WEYL_SPLIT_CAP', '16')
CANONICAL_WEYL_SERIES_CAP=os.getenv('CANONICAL_WEYL_SERIES_CAP', '10')
CANONICAL_WEYL_THREADS=os.getenv('CANONICAL_WEYL_THREADS')
CANONICAL_WEYL_LOG_LEVEL=os.getenv('CANONICAL_WEYL_LOG_LEVEL', 'INFO')

# no models
DATABASES = {}

# Internationalization
# https://docs.djangoproject.com/en/5.0/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name} {message}',
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
        'mainapps': {
            'handlers': ['console'],
            'level': CANONICAL_WEYL_LOG_LEVEL,
            'propagate': False,
        },
    },
}
