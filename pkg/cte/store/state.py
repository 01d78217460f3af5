"""Materialized gateway state, rebuilt by folding journal events in order."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime

from cte.domain.document import CTeDocument, canonical_serialize, format_instant, parse_document, parse_instant
from cte.domain.errors import IllegalTransition
from cte.domain.lifecycle import LifecycleEvent, LifecycleStatus, event_for, transition
from cte.wire.bodies import NumberingRange

from .events import EventKind, JournalEvent

NUMBERING_PREFIX = "NUM:"


def _dt(value: datetime | None) -> str | None:
    return format_instant(value) if value is not None else None


def _parse_dt(value: str | None) -> datetime | None:
    return parse_instant(value) if value else None


def out_field(value) -> str:
    """OUT lines are pipe-delimited and single-line."""
    if value is None:
        return ""
    return str(value).replace("|", "/").replace("\r", " ").replace("\n", " ")


@dataclass
class StatusStep:
    at: datetime
    from_status: LifecycleStatus | None
    to_status: LifecycleStatus
    event: str
    code: int | None = None

    def to_dict(self) -> dict:
        return {
            "at": _dt(self.at),
            "from": self.from_status.value if self.from_status else None,
            "to": self.to_status.value,
            "event": self.event,
            "code": self.code,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StatusStep":
        return cls(
            at=parse_instant(data["at"]),
            from_status=LifecycleStatus(data["from"]) if data["from"] else None,
            to_status=LifecycleStatus(data["to"]),
            event=data["event"],
            code=data["code"],
        )


@dataclass
class DocRecord:
    key: str
    document: CTeDocument
    status: LifecycleStatus
    upserted_at: datetime
    source_file: str = ""
    line_no: int = 0
    request_id: int | None = None
    history: list[StatusStep] = field(default_factory=list)
    last_code: int | None = None
    last_message: str = ""
    reason: str = ""
    receipt: str | None = None
    batch_id: int | None = None
    approved_at: datetime | None = None
    confirmed_code: int | None = None
    corrections: list[str] = field(default_factory=list)

    @property
    def establishment(self) -> str:
        return self.document.establishment

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "xml": canonical_serialize(self.document).decode("utf-8"),
            "status": self.status.value,
            "upserted_at": _dt(self.upserted_at),
            "source_file": self.source_file,
            "line_no": self.line_no,
            "request_id": self.request_id,
            "history": [step.to_dict() for step in self.history],
            "last_code": self.last_code,
            "last_message": self.last_message,
            "reason": self.reason,
            "receipt": self.receipt,
            "batch_id": self.batch_id,
            "approved_at": _dt(self.approved_at),
            "confirmed_code": self.confirmed_code,
            "corrections": list(self.corrections),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DocRecord":
        return cls(
            key=data["key"],
            document=parse_document(data["xml"].encode("utf-8")),
            status=LifecycleStatus(data["status"]),
            upserted_at=parse_instant(data["upserted_at"]),
            source_file=data["source_file"],
            line_no=data["line_no"],
            request_id=data["request_id"],
            history=[StatusStep.from_dict(step) for step in data["history"]],
            last_code=data["last_code"],
            last_message=data["last_message"],
            reason=data["reason"],
            receipt=data["receipt"],
            batch_id=data["batch_id"],
            approved_at=_parse_dt(data["approved_at"]),
            confirmed_code=data["confirmed_code"],
            corrections=list(data["corrections"]),
        )


@dataclass
class NumberingRecord:
    ref: str
    numbering: NumberingRange
    status: LifecycleStatus = LifecycleStatus.DRAFT
    history: list[StatusStep] = field(default_factory=list)
    last_code: int | None = None
    last_message: str = ""
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "ref": self.ref,
            "status": self.status.value,
            "history": [step.to_dict() for step in self.history],
            "last_code": self.last_code,
            "last_message": self.last_message,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NumberingRecord":
        return cls(
            ref=data["ref"],
            numbering=NumberingRange.from_ref(data["ref"]),
            status=LifecycleStatus(data["status"]),
            history=[StatusStep.from_dict(step) for step in data["history"]],
            last_code=data["last_code"],
            last_message=data["last_message"],
            reason=data["reason"],
        )


@dataclass
class BatchRecord:
    batch_id: int
    establishment: str
    keys: list[str]
    size: int
    created_at: datetime
    intent_at: datetime | None = None
    receipt: str | None = None
    received_at: datetime | None = None
    resolved_keys: set[str] = field(default_factory=set)
    attention: bool = False

    @property
    def resolved(self) -> bool:
        return len(self.resolved_keys) >= len(self.keys)

    @property
    def pending_poll(self) -> bool:
        return self.receipt is not None and not self.resolved and not self.attention

    def to_dict(self) -> dict:
        return {
            "batch_id": self.batch_id,
            "establishment": self.establishment,
            "keys": list(self.keys),
            "size": self.size,
            "created_at": _dt(self.created_at),
            "intent_at": _dt(self.intent_at),
            "receipt": self.receipt,
            "received_at": _dt(self.received_at),
            "resolved_keys": sorted(self.resolved_keys),
            "attention": self.attention,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BatchRecord":
        return cls(
            batch_id=data["batch_id"],
            establishment=data["establishment"],
            keys=list(data["keys"]),
            size=data["size"],
            created_at=parse_instant(data["created_at"]),
            intent_at=_parse_dt(data["intent_at"]),
            receipt=data["receipt"],
            received_at=_parse_dt(data["received_at"]),
            resolved_keys=set(data["resolved_keys"]),
            attention=data["attention"],
        )


@dataclass
class RequestRecord:
    request_id: int
    kind: str
    fields: dict
    queued_at: datetime
    source_file: str = ""
    line_no: int = 0
    intent_at: datetime | None = None
    closed: bool = False
    code: int | None = None

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "kind": self.kind,
            "fields": dict(self.fields),
            "queued_at": _dt(self.queued_at),
            "source_file": self.source_file,
            "line_no": self.line_no,
            "intent_at": _dt(self.intent_at),
            "closed": self.closed,
            "code": self.code,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RequestRecord":
        return cls(
            request_id=data["request_id"],
            kind=data["kind"],
            fields=dict(data["fields"]),
            queued_at=parse_instant(data["queued_at"]),
            source_file=data["source_file"],
            line_no=data["line_no"],
            intent_at=_parse_dt(data["intent_at"]),
            closed=data["closed"],
            code=data["code"],
        )


@dataclass
class OutRecord:
    seq: int
    kind: str
    line: str
    flow: str = ""

    @property
    def filename(self) -> str:
        return f"{self.kind}-{self.seq}.txt"


@dataclass
class AnomalyRecord:
    seq: int
    at: datetime
    ref: str
    message: str


class StoreState:
    def __init__(self):
        self.last_seq = 0
        self.documents: dict[str, DocRecord] = {}
        self.numbering: dict[str, NumberingRecord] = {}
        self.batches: dict[int, BatchRecord] = {}
        self.requests: dict[int, RequestRecord] = {}
        # IN file name -> content digests ingested under it, oldest first
        self.files: dict[str, list[str]] = {}
        self.lines: set[tuple[str, int]] = set()
        self.outputs: list[OutRecord] = []
        self.anomalies: list[AnomalyRecord] = []
        self.ingest_errors: list[dict] = []
        self.doc_counter = 0
        # Indexes kept in step with the records; rebuilt by _reindex() after a snapshot load.
        self.open_requests: dict[int, None] = {}
        self.drafts: dict[str, None] = {}
        self.unresolved_batches: dict[int, None] = {}
        self.unconfirmed: dict[str, None] = {}
        self.print_queue: list[str] = []

    # Counters handed to writers

    @property
    def next_batch_id(self) -> int:
        return next(reversed(self.batches), 0) + 1

    @property
    def next_request_id(self) -> int:
        return next(reversed(self.requests), 0) + 1

    def source_for(self, name: str, digest: str) -> str | None:
        """Journal identity of an IN file, or None when this content was already ingested under that name."""
        seen = self.files.get(name, [])
        if digest in seen:
            return None
        return name if not seen else f"{name}#{len(seen) + 1}"

    # Validation before anything is written

    def _status_of(self, ref: str) -> LifecycleStatus:
        if ref in self.documents:
            return self.documents[ref].status
        if ref.startswith(NUMBERING_PREFIX):
            record = self.numbering.get(ref)
            return record.status if record else LifecycleStatus.DRAFT
        raise IllegalTransition("unknown", ref)

    def _resolve_event(self, payload: dict) -> tuple[LifecycleStatus, LifecycleEvent, LifecycleStatus]:
        ref = payload["ref"]
        current = self._status_of(ref)
        source = LifecycleStatus(payload.get("from") or current)
        if source is not current:
            raise IllegalTransition(current, payload.get("event") or f"from {source}")
        if payload.get("event"):
            event = LifecycleEvent(payload["event"])
            target = transition(current, event)
            if payload.get("to") and LifecycleStatus(payload["to"]) is not target:
                raise IllegalTransition(current, event)
        else:
            target = LifecycleStatus(payload["to"])
            event = event_for(current, target)
        return current, event, target

    def validate(self, kind: EventKind, payload: dict) -> None:
        """Raise IllegalTransition (or ValueError) when the event does not fit the current state."""
        if kind in (EventKind.STATUS_CHANGED, EventKind.RESULT_APPLIED) and (
            payload.get("event") or payload.get("to")
        ):
            self._resolve_event(payload)
        elif kind is EventKind.DOC_UPSERTED:
            existing = self.documents.get(payload["key"])
            if existing is not None and existing.status is not LifecycleStatus.DRAFT:
                raise IllegalTransition(existing.status, "upsert")
        elif kind is EventKind.BATCH_CREATED:
            if payload["batch_id"] in self.batches:
                raise ValueError(f"Batch {payload['batch_id']} already exists")
            for key in payload["keys"]:
                record = self.documents.get(key)
                if record is None:
                    raise ValueError(f"Batch references unknown document {key}")
                if record.batch_id is not None:
                    raise ValueError(f"Document {key} already belongs to batch {record.batch_id}")
                transition(record.status, LifecycleEvent.PACKED)
        elif kind is EventKind.RECEIPT_RECORDED:
            batch = self.batches.get(payload["batch_id"])
            if batch is None:
                raise ValueError(f"Unknown batch {payload['batch_id']}")
            if batch.receipt is not None:
                raise ValueError(f"Batch {batch.batch_id} already holds receipt {batch.receipt}")
            for key in batch.keys:
                transition(self.documents[key].status, LifecycleEvent.RECEIPT_RECEIVED)

    # Folding

    def apply(self, event: JournalEvent) -> None:
        handler = getattr(self, f"_apply_{event.kind.value.lower()}")
        handler(event)
        self.last_seq = event.seq

    def _move(self, record: DocRecord, step: StatusStep) -> None:
        record.history.append(step)
        record.status = step.to_status
        self.drafts.pop(record.key, None)
        self.unconfirmed.pop(record.key, None)
        if step.to_status is LifecycleStatus.DRAFT and record.batch_id is None:
            self.drafts[record.key] = None
        if step.to_status is LifecycleStatus.APPROVED:
            if record.approved_at is None:
                record.approved_at = step.at
            if record.confirmed_code is None:
                self.unconfirmed[record.key] = None
            self.print_queue.append(record.key)

    def _close_request(self, request_id, code=None) -> None:
        request = self.requests.get(request_id)
        if request is not None:
            request.closed = True
            request.code = code
            self.open_requests.pop(request_id, None)

    def _step(self, ref: str, event: JournalEvent, code: int | None = None) -> LifecycleStatus:
        current, lifecycle_event, target = self._resolve_event({**event.payload, "ref": ref})
        step = StatusStep(event.at, current, target, lifecycle_event.value, code)
        if ref in self.documents:
            self._move(self.documents[ref], step)
        else:
            record = self.numbering.get(ref)
            if record is None:
                record = NumberingRecord(ref=ref, numbering=NumberingRange.from_ref(ref))
                self.numbering[ref] = record
            record.status = target
            record.history.append(step)
        return target

    def _apply_docupserted(self, event: JournalEvent) -> None:
        payload = event.payload
        document = parse_document(payload["xml"].encode("utf-8"))
        existing = self.documents.get(payload["key"])
        if existing is not None:
            existing.document = document
        else:
            self.doc_counter += 1
            self.documents[payload["key"]] = DocRecord(
                key=payload["key"],
                document=document,
                status=LifecycleStatus.DRAFT,
                upserted_at=event.at,
                source_file=payload.get("file", ""),
                line_no=payload.get("line_no", 0),
                request_id=payload.get("request_id"),
                history=[StatusStep(event.at, None, LifecycleStatus.DRAFT, "Upserted")],
            )
            self.drafts[payload["key"]] = None
        self._close_request(payload.get("request_id"))

    def _apply_statuschanged(self, event: JournalEvent) -> None:
        payload = event.payload
        self._step(payload["ref"], event, payload.get("code"))
        if payload.get("reason") and payload["ref"] in self.documents:
            self.documents[payload["ref"]].reason = payload["reason"]

    def _apply_batchcreated(self, event: JournalEvent) -> None:
        payload = event.payload
        batch = BatchRecord(
            batch_id=payload["batch_id"],
            establishment=payload["establishment"],
            keys=list(payload["keys"]),
            size=payload["size"],
            created_at=event.at,
        )
        self.batches[batch.batch_id] = batch
        self.unresolved_batches[batch.batch_id] = None
        for key in batch.keys:
            record = self.documents[key]
            record.batch_id = batch.batch_id
            target = transition(record.status, LifecycleEvent.PACKED)
            self._move(record, StatusStep(event.at, record.status, target, LifecycleEvent.PACKED.value))

    def _apply_dispatchintent(self, event: JournalEvent) -> None:
        payload = event.payload
        if payload.get("batch_id") is not None:
            self.batches[payload["batch_id"]].intent_at = event.at
        if payload.get("request_id") is not None:
            self.requests[payload["request_id"]].intent_at = event.at

    def _apply_receiptrecorded(self, event: JournalEvent) -> None:
        payload = event.payload
        batch = self.batches[payload["batch_id"]]
        batch.receipt = payload["receipt"]
        batch.received_at = parse_instant(payload["received_at"])
        for key in batch.keys:
            record = self.documents[key]
            record.receipt = batch.receipt
            target = transition(record.status, LifecycleEvent.RECEIPT_RECEIVED)
            self._move(
                record,
                StatusStep(event.at, record.status, target, LifecycleEvent.RECEIPT_RECEIVED.value, 103),
            )

    def _apply_resultapplied(self, event: JournalEvent) -> None:
        payload = event.payload
        ref = payload["ref"]
        code = payload.get("code")
        target = self._step(ref, event, code)
        record = self.documents.get(ref) or self.numbering[ref]
        record.last_code = code
        record.last_message = payload.get("message", "")
        if payload.get("reason"):
            record.reason = payload["reason"]
        receipt = payload.get("receipt") or getattr(record, "receipt", None)
        batch = self.batches.get(payload.get("batch_id"))
        if batch is not None:
            batch.resolved_keys.add(ref)
            if batch.resolved:
                self.unresolved_batches.pop(batch.batch_id, None)
        self._close_request(payload.get("request_id"), code)
        line = "|".join(
            ["RESULT", out_field(ref), out_field(code), target.value, out_field(receipt), format_instant(event.at)]
        )
        self.outputs.append(OutRecord(event.seq, "RESULT", line, payload.get("flow", "")))

    def _apply_correctionnoted(self, event: JournalEvent) -> None:
        payload = event.payload
        record = self.documents[payload["key"]]
        record.corrections.append(payload["text"])
        self._close_request(payload.get("request_id"), payload.get("code"))
        self.print_queue.append(record.key)
        line = "|".join(
            [
                "RESULT",
                record.key,
                out_field(payload.get("code")),
                record.status.value,
                out_field(record.receipt),
                format_instant(event.at),
            ]
        )
        self.outputs.append(OutRecord(event.seq, "RESULT", line, "correct"))

    def _apply_anomaly(self, event: JournalEvent) -> None:
        payload = event.payload
        self.anomalies.append(AnomalyRecord(event.seq, event.at, payload.get("ref", ""), payload["message"]))
        batch = self.batches.get(payload.get("batch_id"))
        if batch is not None and payload.get("attention"):
            batch.attention = True
            self.unresolved_batches.pop(batch.batch_id, None)

    def _apply_fileingested(self, event: JournalEvent) -> None:
        payload = event.payload
        self.files.setdefault(payload.get("name", payload["file"]), []).append(payload.get("digest", ""))

    def _apply_ingesterror(self, event: JournalEvent) -> None:
        payload = event.payload
        if payload.get("file") and payload.get("line_no"):
            self.lines.add((payload["file"], payload["line_no"]))
        self.ingest_errors.append({**payload, "seq": event.seq, "at": format_instant(event.at)})
        self._close_request(payload.get("request_id"))
        line = "|".join(
            ["ERR", out_field(payload.get("line_no", 0)), out_field(payload["stage"]), out_field(payload["message"])]
        )
        self.outputs.append(OutRecord(event.seq, "ERR", line, payload.get("flow", "")))

    def _apply_requestqueued(self, event: JournalEvent) -> None:
        payload = event.payload
        request = RequestRecord(
            request_id=payload["request_id"],
            kind=payload["kind"],
            fields=dict(payload["fields"]),
            queued_at=event.at,
            source_file=payload.get("file", ""),
            line_no=payload.get("line_no", 0),
        )
        self.requests[request.request_id] = request
        self.open_requests[request.request_id] = None
        if request.source_file and request.line_no:
            self.lines.add((request.source_file, request.line_no))

    def _apply_requestclosed(self, event: JournalEvent) -> None:
        payload = event.payload
        request = self.requests[payload["request_id"]]
        self._close_request(request.request_id, payload.get("code"))
        line = "|".join(
            [
                "RESULT",
                out_field(payload.get("ref")),
                out_field(payload.get("code")),
                out_field(payload.get("status")),
                "",
                format_instant(event.at),
            ]
        )
        self.outputs.append(OutRecord(event.seq, "RESULT", line, request.kind))

    def _apply_statusconfirmed(self, event: JournalEvent) -> None:
        key = event.payload["key"]
        self.documents[key].confirmed_code = event.payload["code"]
        self.unconfirmed.pop(key, None)

    # Snapshots

    def to_dict(self) -> dict:
        return {
            "last_seq": self.last_seq,
            "doc_counter": self.doc_counter,
            "documents": [record.to_dict() for record in self.documents.values()],
            "numbering": [record.to_dict() for record in self.numbering.values()],
            "batches": [record.to_dict() for record in self.batches.values()],
            "requests": [record.to_dict() for record in self.requests.values()],
            "files": {name: list(digests) for name, digests in sorted(self.files.items())},
            "lines": sorted([list(item) for item in self.lines]),
            "outputs": [[o.seq, o.kind, o.line, o.flow] for o in self.outputs],
            "anomalies": [[a.seq, _dt(a.at), a.ref, a.message] for a in self.anomalies],
            "ingest_errors": list(self.ingest_errors),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StoreState":
        state = cls()
        state.last_seq = data["last_seq"]
        state.doc_counter = data["doc_counter"]
        for item in data["documents"]:
            record = DocRecord.from_dict(item)
            state.documents[record.key] = record
        for item in data["numbering"]:
            record = NumberingRecord.from_dict(item)
            state.numbering[record.ref] = record
        for item in data["batches"]:
            record = BatchRecord.from_dict(item)
            state.batches[record.batch_id] = record
        for item in data["requests"]:
            record = RequestRecord.from_dict(item)
            state.requests[record.request_id] = record
        state.files = {name: list(digests) for name, digests in data["files"].items()}
        state.lines = {(item[0], item[1]) for item in data["lines"]}
        state.outputs = [OutRecord(*item) for item in data["outputs"]]
        state.anomalies = [
            AnomalyRecord(seq, parse_instant(at), ref, message) for seq, at, ref, message in data["anomalies"]
        ]
        state.ingest_errors = list(data["ingest_errors"])
        state._reindex()
        return state

    def _reindex(self) -> None:
        self.open_requests = {rid: None for rid, request in self.requests.items() if not request.closed}
        self.drafts = {
            key: None
            for key, record in self.documents.items()
            if record.status is LifecycleStatus.DRAFT and record.batch_id is None
        }
        self.unresolved_batches = {
            bid: None for bid, batch in self.batches.items() if not batch.resolved and not batch.attention
        }
        self.unconfirmed = {
            key: None
            for key, record in self.documents.items()
            if record.status is LifecycleStatus.APPROVED and record.confirmed_code is None
        }
        self.print_queue = [key for key, record in self.documents.items() if record.status is LifecycleStatus.APPROVED]
