"""Injectable time sources."""

from __future__ import annotations

import threading
from datetime import datetime, timedelta, timezone as dt_timezone

from django.utils import timezone


class SystemClock:
    def now(self) -> datetime:
        return timezone.now()


class VirtualClock:
    """Manually advanced clock for simulations and tests."""

    def __init__(self, start: datetime | None = None):
        self._now = start or datetime(2024, 1, 1, tzinfo=dt_timezone.utc)
        if self._now.tzinfo is None:
            raise ValueError("VirtualClock needs a timezone-aware start")
        self._lock = threading.Lock()

    def now(self) -> datetime:
        with self._lock:
            return self._now

    def advance(self, delta: timedelta | float) -> datetime:
        if not isinstance(delta, timedelta):
            delta = timedelta(seconds=delta)
        if delta < timedelta(0):
            raise ValueError("VirtualClock cannot move backwards")
        with self._lock:
            self._now += delta
            return self._now

    def set(self, value: datetime) -> None:
        with self._lock:
            if value < self._now:
                raise ValueError("VirtualClock cannot move backwards")
            self._now = value
