"""Append-only journal file.

Each record is framed as [u32 length][u32 CRC32 of payload][payload], both
integers big-endian, the payload being the UTF-8 JSON encoding of one event.
Records are never rewritten; a torn or altered record stops replay with a
JournalCorruption naming the sequence number it should have carried.
"""

from __future__ import annotations

import io
import logging
import os
import struct
import threading
import zlib
from pathlib import Path
from typing import Iterator

from cte.domain.errors import JournalCorruption

from .events import JournalEvent

logger = logging.getLogger(__name__)

HEADER = struct.Struct(">II")


def frame(payload: bytes) -> bytes:
    return HEADER.pack(len(payload), zlib.crc32(payload) & 0xFFFFFFFF) + payload


def read_frames(stream, first_seq: int = 1) -> Iterator[JournalEvent]:
    expected = first_seq
    while True:
        header = stream.read(HEADER.size)
        if not header:
            return
        if len(header) < HEADER.size:
            raise JournalCorruption(expected, "truncated record header")
        length, crc = HEADER.unpack(header)
        payload = stream.read(length)
        if len(payload) < length:
            raise JournalCorruption(expected, f"truncated payload ({len(payload)} of {length} bytes)")
        if zlib.crc32(payload) & 0xFFFFFFFF != crc:
            raise JournalCorruption(expected, "checksum mismatch")
        try:
            event = JournalEvent.decode(payload)
        except (ValueError, KeyError) as exc:
            raise JournalCorruption(expected, f"undecodable payload: {exc}") from exc
        if event.seq != expected:
            raise JournalCorruption(expected, f"found seq {event.seq}")
        yield event
        expected += 1


class Journal:
    """File-backed when `path` is given, otherwise held in memory with the same framing."""

    def __init__(self, path: Path | str | None = None, fsync: bool = True):
        self.path = Path(path) if path is not None else None
        self.fsync = fsync
        self._buffer = bytearray()
        self._lock = threading.Lock()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if not self.path.exists():
                self.path.touch()
                logger.info("Journal created at %s", self.path)

    @property
    def in_memory(self) -> bool:
        return self.path is None

    def append(self, event: JournalEvent) -> None:
        record = frame(event.encode())
        with self._lock:
            if self.path is None:
                self._buffer.extend(record)
                return
            with open(self.path, "ab") as handle:
                handle.write(record)
                handle.flush()
                if self.fsync:
                    os.fsync(handle.fileno())

    def raw_bytes(self) -> bytes:
        with self._lock:
            if self.path is None:
                return bytes(self._buffer)
            return self.path.read_bytes()

    def events(self) -> Iterator[JournalEvent]:
        return read_frames(io.BytesIO(self.raw_bytes()))

    def size(self) -> int:
        with self._lock:
            if self.path is None:
                return len(self._buffer)
            return self.path.stat().st_size
