"""Journal-backed store: validated appends, replay, snapshots and queries."""

from __future__ import annotations

import json
import logging
import os
import struct
import threading
import zlib
from datetime import datetime
from pathlib import Path

from cte.domain.errors import JournalCorruption
from cte.domain.lifecycle import LifecycleStatus

from .events import EventKind, JournalEvent
from .journal import Journal
from .state import DocRecord, StoreState

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"CTEJ1"
SNAPSHOT_HEADER = struct.Struct(">II")


def write_snapshot(path: Path, state: StoreState) -> None:
    payload = json.dumps(state.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    blob = SNAPSHOT_MAGIC + SNAPSHOT_HEADER.pack(len(payload), zlib.crc32(payload) & 0xFFFFFFFF) + payload
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def read_snapshot(path: Path) -> StoreState | None:
    """None when the snapshot is absent or unusable; the journal alone is then replayed."""
    if not path.exists():
        return None
    blob = path.read_bytes()
    offset = len(SNAPSHOT_MAGIC)
    if blob[:offset] != SNAPSHOT_MAGIC or len(blob) < offset + SNAPSHOT_HEADER.size:
        logger.warning("Ignoring snapshot %s: bad header", path)
        return None
    length, crc = SNAPSHOT_HEADER.unpack_from(blob, offset)
    payload = blob[offset + SNAPSHOT_HEADER.size :]
    if len(payload) != length or zlib.crc32(payload) & 0xFFFFFFFF != crc:
        logger.warning("Ignoring snapshot %s: checksum mismatch", path)
        return None
    return StoreState.from_dict(json.loads(payload.decode("utf-8")))


class Store:
    """Single writer; every append is validated, made durable, then applied."""

    def __init__(self, journal: Journal, snapshot_every: int = 0):
        self.journal = journal
        self.snapshot_every = snapshot_every
        self._lock = threading.RLock()
        self.state = self.replay()

    @classmethod
    def open(cls, path: Path | str | None = None, fsync: bool = True, snapshot_every: int = 0) -> "Store":
        return cls(Journal(path, fsync=fsync), snapshot_every=snapshot_every)

    @property
    def snapshot_path(self) -> Path | None:
        if self.journal.path is None:
            return None
        return self.journal.path.with_name(self.journal.path.name + ".snap")

    def replay(self) -> StoreState:
        """Rebuild state from the snapshot (when present) plus the journal tail."""
        state = None
        if self.snapshot_path is not None:
            state = read_snapshot(self.snapshot_path)
        if state is None:
            state = StoreState()
        for event in self.journal.events():
            if event.seq <= state.last_seq:
                continue
            if event.seq != state.last_seq + 1:
                raise JournalCorruption(state.last_seq + 1, f"found seq {event.seq}")
            state.apply(event)
        return state

    def append(self, kind: EventKind, payload: dict, at: datetime) -> JournalEvent:
        with self._lock:
            self.state.validate(kind, payload)
            event = JournalEvent(seq=self.state.last_seq + 1, at=at, kind=EventKind(kind), payload=payload)
            self.journal.append(event)
            self.state.apply(event)
            if self.snapshot_every and event.seq % self.snapshot_every == 0:
                self.snapshot()
            return event

    def snapshot(self) -> Path | None:
        path = self.snapshot_path
        if path is None:
            return None
        with self._lock:
            write_snapshot(path, self.state)
        logger.info("Snapshot written at seq %d", self.state.last_seq)
        return path

    def events(self):
        return self.journal.events()

    def query(
        self,
        *,
        status: LifecycleStatus | str | None = None,
        establishment: str | None = None,
        since: datetime | None = None,
        until: datetime | None = None,
        access_key: str | None = None,
    ) -> list[DocRecord]:
        """Documents matching every given filter; dates apply to the issue instant, [since, until)."""
        with self._lock:
            if access_key is not None:
                record = self.state.documents.get(access_key)
                candidates = [record] if record is not None else []
            else:
                candidates = list(self.state.documents.values())
            wanted = LifecycleStatus(status) if status is not None else None
            return [
                record
                for record in candidates
                if (wanted is None or record.status is wanted)
                and (establishment is None or record.establishment == establishment)
                and (since is None or record.document.issue_instant >= since)
                and (until is None or record.document.issue_instant < until)
            ]
