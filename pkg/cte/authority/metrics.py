"""Trailing-window average response time reported on receipts and status."""

from __future__ import annotations

from collections import deque
from datetime import datetime, timedelta
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable

WINDOW = timedelta(seconds=300)


def _micros(delta: timedelta) -> int:
    return (delta.days * 86_400 + delta.seconds) * 1_000_000 + delta.microseconds


def avg_response_time(metrics: Iterable[tuple[datetime, datetime]], now: datetime) -> int | None:
    """Mean of completed_at - received_at in whole ms over (now - 300 s, now].

    None means there was no sample in the window.
    """
    start = now - WINDOW
    durations = [_micros(done - received) for received, done in metrics if start < done <= now]
    if not durations:
        return None
    mean_ms = Decimal(sum(durations)) / Decimal(len(durations)) / Decimal(1000)
    return int(mean_ms.quantize(Decimal("1"), rounding=ROUND_HALF_UP))


class ResponseTimeWindow:
    def __init__(self):
        self.samples: deque[tuple[datetime, datetime]] = deque()

    def record(self, received_at: datetime, completed_at: datetime) -> None:
        self.samples.append((received_at, completed_at))

    def prune(self, now: datetime) -> None:
        # Samples arrive in completion order.
        cutoff = now - WINDOW
        while self.samples and self.samples[0][1] <= cutoff:
            self.samples.popleft()

    def average(self, now: datetime) -> int | None:
        return avg_response_time(self.samples, now)

    def __len__(self):
        return len(self.samples)
