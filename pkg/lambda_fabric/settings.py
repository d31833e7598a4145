import os
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv("SECRET_KEY", "fabric-bench-local")
DEBUG = os.getenv("DEBUG", "").lower() in {"1", "true", "yes"}
ALLOWED_HOSTS: list[str] = []

INSTALLED_APPS = [
    "fabric",
]

LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name, "")
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        return default


def _env_flag(name: str, default: bool = False) -> bool:
    raw = os.getenv(name, "").strip().lower()
    if not raw:
        return default
    return raw in {"1", "true", "yes", "on"}


FABRIC_NODES_PER_CLUSTER = _env_int("FABRIC_NODES_PER_CLUSTER", 16)
FABRIC_ID_WIDTH = _env_int("FABRIC_ID_WIDTH", 4)
FABRIC_VALUE_WIDTH = _env_int("FABRIC_VALUE_WIDTH", 8)
FABRIC_MODE = os.getenv("FABRIC_MODE", "dedicated_depth").strip() or "dedicated_depth"
FABRIC_MAX_TICKS = _env_int("FABRIC_MAX_TICKS", 1000)
# 0 means "one slot per node"
FABRIC_ALU_QUEUE_CAPACITY = _env_int("FABRIC_ALU_QUEUE_CAPACITY", 0)
FABRIC_LOCAL_COMPARE = _env_flag("FABRIC_LOCAL_COMPARE")
FABRIC_DEPTH_ORIGIN = os.getenv("FABRIC_DEPTH_ORIGIN", "innermost").strip() or "innermost"
FABRIC_MAX_STEPS = _env_int("FABRIC_MAX_STEPS", 10000)
FABRIC_TICK_ENVELOPE = _env_int("FABRIC_TICK_ENVELOPE", 4)
FABRIC_BENCH_DIR = Path(os.getenv("FABRIC_BENCH_DIR", BASE_DIR / "fabric" / "benches"))

LOG_DIR = Path(os.getenv("LOG_DIR", BASE_DIR / "logs"))
LOG_DIR.mkdir(exist_ok=True)

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "default": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"}
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "default"},
        "file": {
            "class": "logging.handlers.RotatingFileHandler",
            "filename": str(LOG_DIR / "fabric.log"),
            "maxBytes": 2_000_000,
            "backupCount": 3,
            "formatter": "default",
            "encoding": "utf-8",
        },
    },
    "root": {"handlers": ["console", "file"], "level": os.getenv("LOG_LEVEL", "WARNING")},
    "loggers": {
        "fabric": {"handlers": ["console", "file"], "level": os.getenv("FABRIC_LOG_LEVEL", "INFO"), "propagate": False},
    },
}

CELERY_BROKER_URL = os.getenv("CELERY_BROKER_URL", "redis://localhost:6379/0")
CELERY_RESULT_BACKEND = os.getenv("CELERY_RESULT_BACKEND", CELERY_BROKER_URL)
CELERY_TASK_ALWAYS_EAGER = _env_flag("CELERY_TASK_ALWAYS_EAGER", True)
CELERY_TASK_EAGER_PROPAGATES = True
CELERY_TASK_TRACK_STARTED = True
CELERY_TASK_TIME_LIMIT = 60 * 10
CELERY_TASK_SOFT_TIME_LIMIT = 60 * 8
CELERY_WORKER_PREFETCH_MULTIPLIER = 1
CELERY_TASK_ACKS_LATE = True
