"""Journal events: immutable, sequence-numbered facts about the gateway."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum

from cte.domain.document import format_instant, parse_instant


class EventKind(str, Enum):
    DOC_UPSERTED = "DocUpserted"
    STATUS_CHANGED = "StatusChanged"
    BATCH_CREATED = "BatchCreated"
    DISPATCH_INTENT = "DispatchIntent"
    RECEIPT_RECORDED = "ReceiptRecorded"
    RESULT_APPLIED = "ResultApplied"
    CORRECTION_NOTED = "CorrectionNoted"
    ANOMALY = "Anomaly"
    FILE_INGESTED = "FileIngested"
    INGEST_ERROR = "IngestError"
    REQUEST_QUEUED = "RequestQueued"
    REQUEST_CLOSED = "RequestClosed"
    STATUS_CONFIRMED = "StatusConfirmed"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class JournalEvent:
    seq: int
    at: datetime
    kind: EventKind
    payload: dict = field(default_factory=dict)

    def encode(self) -> bytes:
        body = {
            "seq": self.seq,
            "at": format_instant(self.at),
            "kind": self.kind.value,
            "payload": self.payload,
        }
        return json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")

    @classmethod
    def decode(cls, data: bytes) -> "JournalEvent":
        body = json.loads(data.decode("utf-8"))
        return cls(
            seq=int(body["seq"]),
            at=parse_instant(body["at"]),
            kind=EventKind(body["kind"]),
            payload=body.get("payload") or {},
        )
