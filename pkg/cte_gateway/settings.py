from pathlib import Path
import os

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get("DJANGO_SECRET_KEY", "dev-secret-key-change-me")
DEBUG = os.environ.get("DJANGO_DEBUG", "true").lower() == "true"
_allowed_hosts_env = os.environ.get("DJANGO_ALLOWED_HOSTS", "127.0.0.1,localhost")
ALLOWED_HOSTS = [host.strip() for host in _allowed_hosts_env.split(",") if host.strip()]
LOG_LEVEL = os.environ.get("DJANGO_LOG_LEVEL", "INFO").upper()

INSTALLED_APPS = [
    "cte",
]

MIDDLEWARE = [
    "django.middleware.security.SecurityMiddleware",
    "django.middleware.common.CommonMiddleware",
]

ROOT_URLCONF = "cte_gateway.urls"

WSGI_APPLICATION = "cte_gateway.wsgi:application"
ASGI_APPLICATION = "cte_gateway.asgi:application"

# The gateway keeps its state in the append-only journal, not in a database.
DATABASES = {}

TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# Batch envelopes may reach 500 KB; leave headroom for the request wrapper.
DATA_UPLOAD_MAX_MEMORY_SIZE = int(os.environ.get("DATA_UPLOAD_MAX_MEMORY_SIZE", 2 * 1024 * 1024))


def _env_list(name: str, default: str = "") -> list[str]:
    return [item.strip() for item in os.environ.get(name, default).split(",") if item.strip()]


# Authority simulator.
CTE_ENVIRONMENT = os.environ.get("CTE_ENVIRONMENT", "approval").lower()
CTE_AUTHORITY_UF = os.environ.get("CTE_AUTHORITY_UF", "35")
CTE_AUTHORITY_DELAY_MS = int(os.environ.get("CTE_AUTHORITY_DELAY_MS", "0"))
CTE_AUTHORITY_WORKER = os.environ.get("CTE_AUTHORITY_WORKER", "true").lower() == "true"
CTE_AUTHORITY_WORKER_INTERVAL_MS = int(os.environ.get("CTE_AUTHORITY_WORKER_INTERVAL_MS", "200"))
CTE_AUTHORITY_CERTIFICATES = os.environ.get("CTE_AUTHORITY_CERTIFICATES")
CTE_AUTHORITY_ENABLED_CNPJS = _env_list("CTE_AUTHORITY_ENABLED_CNPJS")

# Wire protocol.
CTE_PROTOCOL_VERSION = os.environ.get("CTE_PROTOCOL_VERSION", "1.04")
CTE_SUPPORTED_VERSIONS = _env_list("CTE_SUPPORTED_VERSIONS", CTE_PROTOCOL_VERSION)
CTE_HTTP_TIMEOUT_SECONDS = float(os.environ.get("CTE_HTTP_TIMEOUT_SECONDS", "30"))

# Gateway and journal.
CTE_JOURNAL_PATH = Path(os.environ.get("CTE_JOURNAL_PATH", str(BASE_DIR / "var" / "journal.bin")))
CTE_JOURNAL_FSYNC = os.environ.get("CTE_JOURNAL_FSYNC", "true").lower() == "true"
CTE_SNAPSHOT_EVERY = int(os.environ.get("CTE_SNAPSHOT_EVERY", "0"))
CTE_IN_DIR = Path(os.environ.get("CTE_IN_DIR", str(BASE_DIR / "var" / "IN")))
CTE_OUT_DIR = Path(os.environ.get("CTE_OUT_DIR", str(BASE_DIR / "var" / "OUT")))
CTE_TICK_SECONDS = int(os.environ.get("CTE_TICK_SECONDS", "60"))
CTE_AUTHORITY_ENDPOINT = os.environ.get("CTE_AUTHORITY_ENDPOINT", "http://127.0.0.1:8000")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "verbose",
        }
    },
    "root": {
        "handlers": ["console"],
        "level": LOG_LEVEL,
    },
    "loggers": {
        "django.request": {
            "handlers": ["console"],
            "level": "ERROR",
            "propagate": False,
        },
        "cte.authority": {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False},
        "cte.gateway": {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False},
        "gunicorn.error": {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False},
        "gunicorn.access": {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False},
    },
}
