"""Process-wide authority instance for the HTTP service, plus its processing worker."""

from __future__ import annotations

import logging
import threading
from datetime import timedelta

from django.conf import settings

from cte.clock import SystemClock

from .service import Authority, CertificateRegistry, ProductionRegistry

logger = logging.getLogger(__name__)

_AUTHORITY = None
_WORKER = None
_LOCK = threading.Lock()


def build_authority(clock=None) -> Authority:
    certificates = CertificateRegistry()
    if settings.CTE_AUTHORITY_CERTIFICATES:
        certificates = CertificateRegistry.from_json(settings.CTE_AUTHORITY_CERTIFICATES)
        logger.info("Loaded %d certificate(s) from %s", len(certificates), settings.CTE_AUTHORITY_CERTIFICATES)
    return Authority(
        environment=settings.CTE_ENVIRONMENT,
        uf=settings.CTE_AUTHORITY_UF,
        delay=timedelta(milliseconds=settings.CTE_AUTHORITY_DELAY_MS),
        certificates=certificates,
        production=ProductionRegistry(settings.CTE_AUTHORITY_ENABLED_CNPJS),
        supported_versions=settings.CTE_SUPPORTED_VERSIONS,
        clock=clock or SystemClock(),
    )


class ProcessingWorker(threading.Thread):
    """Drains ready batches and purges expired output on a fixed interval."""

    def __init__(self, authority: Authority, interval: float):
        super().__init__(name="cte-authority-worker", daemon=True)
        self.authority = authority
        self.interval = interval
        self.stopped = threading.Event()

    def run(self):
        while not self.stopped.wait(self.interval):
            try:
                now = self.authority.clock.now()
                self.authority.pump(now)
                self.authority.purge_output(now)
            except Exception:
                logger.exception("Authority worker iteration failed")

    def stop(self):
        self.stopped.set()


def get_authority() -> Authority:
    global _AUTHORITY, _WORKER
    if _AUTHORITY is None:
        with _LOCK:
            if _AUTHORITY is None:
                authority = build_authority()
                if settings.CTE_AUTHORITY_WORKER:
                    _WORKER = ProcessingWorker(authority, settings.CTE_AUTHORITY_WORKER_INTERVAL_MS / 1000)
                    _WORKER.start()
                logger.info("Authority started (%s, UF %s)", authority.environment, authority.uf)
                _AUTHORITY = authority
    return _AUTHORITY


def reset_authority() -> None:
    global _AUTHORITY, _WORKER
    with _LOCK:
        if _WORKER is not None:
            _WORKER.stop()
        _AUTHORITY = None
        _WORKER = None
