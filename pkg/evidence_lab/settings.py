"""Django settings for evidence_lab.

The project has no web surface and no database: it is a library of evidence
computations plus management commands that reproduce the experiments.
Configuration is done primarily via environment variables (optionally from a
.env file).
"""

from __future__ import annotations

import os
from pathlib import Path

from dotenv import load_dotenv

BASE_DIR = Path(__file__).resolve().parent.parent
load_dotenv(os.getenv("EVIDENCE_DOTENV", str(BASE_DIR / ".env")))


def env(name: str, default: str | None = None) -> str:
    value = os.getenv(name, default)
    if value is None:
        raise RuntimeError(f"Missing required env var: {name}")
    return value


SECRET_KEY = env("DJANGO_SECRET_KEY", "dev-insecure-change-me")
DEBUG = env("DJANGO_DEBUG", "0") == "1"

ALLOWED_HOSTS: list[str] = []

INSTALLED_APPS = [
    "evidence.apps.EvidenceConfig",
    "conjugate.apps.ConjugateConfig",
    "discrete.apps.DiscreteConfig",
    "exoplanet.apps.ExoplanetConfig",
]

# No persistence anywhere; tests are SimpleTestCase only.
DATABASES: dict = {}

USE_TZ = True
TIME_ZONE = env("DJANGO_TIME_ZONE", "UTC")

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# ---------------- QUADRATURE ----------------
EVIDENCE_GRID_BUDGET = int(float(env("EVIDENCE_GRID_BUDGET", str(10**7))))
# Nodes evaluated per call of a log-density evaluator.
EVIDENCE_GRID_CHUNK = int(env("EVIDENCE_GRID_CHUNK", str(2**18)))
EVIDENCE_DEFAULT_RULE = env("EVIDENCE_DEFAULT_RULE", "midpoint")
EVIDENCE_REFINE_START_POINTS = int(env("EVIDENCE_REFINE_START_POINTS", "8"))

# ---------------- KEPLER / RADIAL VELOCITY ----------------
KEPLER_TOL = float(env("KEPLER_TOL", "1e-12"))
KEPLER_MAX_ITER = int(env("KEPLER_MAX_ITER", "50"))
EXOPLANET_V0_POINTS = int(env("EXOPLANET_V0_POINTS", "64"))
# Period cell width in days; the one-planet likelihood peak is ~0.005 days wide.
EXOPLANET_PERIOD_STEP = float(env("EXOPLANET_PERIOD_STEP", "0.004"))

# ---------------- EXPERIMENT HARNESS ----------------
EVIDENCE_THREADS = int(env("EVIDENCE_THREADS", "1"))
EVIDENCE_OUTPUT_DIR = Path(env("EVIDENCE_OUTPUT_DIR", str(BASE_DIR / "results"))).resolve()
EVIDENCE_ENV_PREFIX = "EVIDENCE_"

# ---------------- LOGGING ----------------
EVIDENCE_LOG_LEVEL = env("EVIDENCE_LOG_LEVEL", "INFO").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s %(message)s"},
    },
    "handlers": {"console": {"class": "logging.StreamHandler", "formatter": "plain"}},
    "root": {"handlers": ["console"], "level": EVIDENCE_LOG_LEVEL},
    "loggers": {
        "evidence": {"level": EVIDENCE_LOG_LEVEL},
        "conjugate": {"level": EVIDENCE_LOG_LEVEL},
        "discrete": {"level": EVIDENCE_LOG_LEVEL},
        "exoplanet": {"level": EVIDENCE_LOG_LEVEL},
    },
}
