"""
Django settings for jfto_project project.

The project has no HTTP surface; Django provides configuration, the management
command CLI, the run-manifest database and the test runner.

Every numerical default lives in the ``JFTO`` dict below and is read through
``jfto_app.conf``.
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


SECRET_KEY = os.environ.get('JFTO_SECRET_KEY', 'jfto-local-only-not-a-secret')

DEBUG = os.environ.get('JFTO_DEBUG', '0') == '1'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    # Third party apps
    'rest_framework',

    # Local apps
    'jfto_app.apps.JftoAppConfig',
    'jfto_runs.apps.JftoRunsConfig',
]


# Output root for artifacts and the run database.
OUTPUT_ROOT = Path(os.environ.get('JFTO_OUTPUT_ROOT', BASE_DIR / 'runs'))


# Database
# https://docs.djangoproject.com/en/5.1/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.environ.get('JFTO_DB_PATH', BASE_DIR / 'db.sqlite3'),
    }
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Default primary key field type

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging

LOG_LEVEL = os.environ.get('JFTO_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'jfto_app': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
        'jfto_runs': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}


# Joint flow trajectory optimization defaults

JFTO = {
    'ARM_FILE': BASE_DIR / 'jfto_app' / 'data' / 'arm_6dof.json',
    'DEMOS': {
        'horizon': 20,
        'noise': 0.005,
        'gap': 0.2,
    },
    'FLOW': {
        'widths': [8, 64, 64, 6],
        'steps': 4000,
        'batch': 128,
        'lr': 1e-3,
        'ode_steps': 40,
        # floor on the per-dimension chart scale (meters / radians)
        'min_scale': 1e-3,
        # rotations farther than this from identity trigger chart re-centering
        'recenter_angle': 2.5,
    },
    'GRASP': {
        'widths_hidden': [128, 64],
        'fourier_k': 4,
        'steps': 3000,
        'batch': 128,
        'lr': 1e-3,
        'lambda': 0.5,
        'w_trans': 0.5,
        'sigma_translation': 0.01,
        'sigma_rotation': 0.15,
        'soft_inflation': 1.5,
        'negative_ratio': 1.5,
        'gripper': {
            'width': 0.08,
            'depth': 0.05,
            'finger_width': 0.02,
            'finger_thickness': 0.01,
            'palm_thickness': 0.02,
            'antipodal_tolerance_deg': 30.0,
            'center_tolerance': 0.003,
        },
    },
    'SCENE': {
        'margin': 0.01,
        'softmin_temperature': 0.005,
        'softmin_neighbors': 16,
    },
    'OPTIMIZER': {
        'alpha': 0.5,
        'beta': 0.8,
        'gamma': 1.0,
        'batch': 8,
        'steps': 80,
        'lr': 0.02,
        'init_candidates': 512,
        'init': 'proposal',
        'ik_iterations': 60,
        'density_steps': 6,
        'distance_scale': 0.01,
        'gradient': 'analytic',
        'fd_eps': 1e-4,
        'joint_fd_eps': 1e-6,
        'workers': 1,
        'max_joint_step': None,
    },
}
