"""The gateway tick: IN files to batches, batches to results, results to OUT files.

Every external effect is preceded by a journal record saying it is about to
happen, and its outcome is journaled as soon as it is known. On restart the
store is replayed and the same tick logic picks up whatever was left open.
"""

from __future__ import annotations

import hashlib
import logging
import threading
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime

from cte.authority.service import Environment
from cte.clock import SystemClock
from cte.domain.access_key import compute_access_key
from cte.domain.cnpj import Cnpj
from cte.domain.document import CTeDocument, Modal, canonical_serialize, parse_instant
from cte.domain.errors import CertificateError, CteError, TransportError
from cte.domain.lifecycle import LifecycleEvent, LifecycleStatus
from cte.domain.signing import CNPJ_MISMATCH, sign
from cte.services.batcher import Batch, pack, serialize_batch
from cte.store.events import EventKind
from cte.store.store import Store
from cte.wire import codes
from cte.wire.bodies import NumberingRange
from cte.wire.client import AuthorityClient
from cte.wire.transport import HttpTransport

from .config import GatewayConfig
from .ingest import IngestRecord, LineError, RecordKind, file_digest, mark_done, parse_line, pending_files, read_lines
from .outbox import Outbox

logger = logging.getLogger(__name__)

# Answers that say "try again later" rather than judging the request.
RETRY_CODES = frozenset({codes.SERVICE_PARALYSED, codes.INTERNAL_ERROR})

REQUEST_KINDS = {
    RecordKind.ISSUE: "issue",
    RecordKind.CANCEL: "cancel",
    RecordKind.CANCEL_NUMBERING: "cancel_numbering",
    RecordKind.CORRECT: "correct",
}


@dataclass
class TickReport:
    at: datetime
    ingested: int = 0
    parse_errors: int = 0
    drafts: int = 0
    locally_refused: int = 0
    batches_created: int = 0
    batches_sent: int = 0
    receipts: int = 0
    batches_refused: int = 0
    withdrawals: int = 0
    numbering: int = 0
    corrections: int = 0
    polled: int = 0
    approved: int = 0
    rejected: int = 0
    confirmations: int = 0
    anomalies: int = 0
    files_written: int = 0
    transport_failures: int = 0
    failed_stages: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["at"] = self.at.isoformat()
        return data


def derive_random_seed(establishment: str, series: str, number: str, counter: int) -> str:
    digest = hashlib.sha256(f"{establishment}|{series}|{number}|{counter}".encode("ascii")).hexdigest()
    return f"{int(digest, 16) % 100_000_000:08d}"


class Gateway:
    def __init__(
        self,
        config: GatewayConfig,
        store: Store,
        client: AuthorityClient,
        *,
        clock=None,
        outbox: Outbox | None = None,
    ):
        self.config = config
        self.store = store
        self.client = client
        self.clock = clock or SystemClock()
        self.outbox = outbox or Outbox(
            config.out_dir,
            approval=config.environment is Environment.APPROVAL,
            pdf=config.dacte_pdf,
        )
        self._tick_lock = threading.Lock()

    @classmethod
    def from_config(cls, config: GatewayConfig, *, clock=None, transport=None) -> "Gateway":
        store = Store.open(config.journal_path, fsync=config.journal_fsync, snapshot_every=config.snapshot_every)
        transport = transport or HttpTransport(config.authority_endpoint, timeout=config.http_timeout)
        client = AuthorityClient(
            transport,
            certificate_ref=config.certificate.key_ref,
            uf=config.uf,
            version=config.version,
        )
        return cls(config, store, client, clock=clock)

    @property
    def state(self):
        return self.store.state

    def _append(self, kind: EventKind, payload: dict, now: datetime):
        return self.store.append(kind, payload, now)

    # Tick

    def tick(self, now: datetime | None = None) -> TickReport:
        now = now or self.clock.now()
        report = TickReport(at=now)
        if not self._tick_lock.acquire(blocking=False):
            logger.warning("Tick skipped: previous tick still running")
            report.failed_stages.append("busy")
            return report
        try:
            stages = (
                ("scan_in", self.scan_in),
                ("send", self.run_send_flow),
                ("withdraw", self.run_withdraw_flow),
                ("withdraw_numbering", self.run_withdraw_numbering_flow),
                ("correct", self.run_correction_flow),
                ("poll", self.poll_pending),
                ("track_approved", self.track_approved),
                ("outbox", self.flush_outbox),
            )
            for name, stage in stages:
                try:
                    stage(now, report)
                except Exception:
                    logger.exception("Stage %s failed", name)
                    report.failed_stages.append(name)
        finally:
            self._tick_lock.release()
        return report

    def run_forever(self, stop: threading.Event) -> None:
        interval = self.config.tick_interval.total_seconds()
        logger.info("Gateway running; tick every %ss", interval)
        while not stop.is_set():
            report = self.tick()
            if report.failed_stages:
                logger.warning("Tick finished with failed stages: %s", ", ".join(report.failed_stages))
            stop.wait(interval)

    def flush_outbox(self, now: datetime, report: TickReport | None = None) -> int:
        written = self.outbox.flush(self.state)
        if report is not None:
            report.files_written += written
        return written

    # Ingestion

    def scan_in(self, now: datetime, report: TickReport | None = None) -> list[IngestRecord]:
        report = report or TickReport(at=now)
        records = []
        for path in pending_files(self.config.in_dir):
            name = path.name
            lines = read_lines(path)
            if lines is None:
                continue
            digest = file_digest(lines)
            source = self.state.source_for(name, digest)
            if source is None:
                mark_done(path)
                continue
            if source != name:
                logger.warning("%s reuses an ingested file name with new content; journaled as %s", name, source)
            for line_no, raw in enumerate(lines, start=1):
                if (source, line_no) in self.state.lines or not raw.strip():
                    continue
                try:
                    kind, payload = parse_line(raw)
                except LineError as exc:
                    self._append(
                        EventKind.INGEST_ERROR,
                        {"file": source, "line_no": line_no, "stage": "parse", "message": str(exc)},
                        now,
                    )
                    report.parse_errors += 1
                    continue
                self._append(
                    EventKind.REQUEST_QUEUED,
                    {
                        "request_id": self.state.next_request_id,
                        "kind": REQUEST_KINDS[kind],
                        "fields": payload,
                        "file": source,
                        "line_no": line_no,
                    },
                    now,
                )
                records.append(IngestRecord(kind, payload, source, line_no))
                report.ingested += 1
            self._append(EventKind.FILE_INGESTED, {"file": source, "name": name, "digest": digest, "lines": len(lines)}, now)
            mark_done(path, source)
            logger.info("Ingested %s (%d lines)", source, len(lines))
        return records

    # Send

    def _open_requests(self, kind: str):
        return [
            self.state.requests[rid] for rid in list(self.state.open_requests) if self.state.requests[rid].kind == kind
        ]

    def _build_draft(self, fields: dict) -> CTeDocument:
        issue_instant = parse_instant(fields["issue_instant"])
        key = compute_access_key(
            uf_code=self.config.uf,
            issue_instant=issue_instant,
            issuer=fields["establishment"],
            series=fields["series"],
            number=fields["number"],
            random_seed=derive_random_seed(
                fields["establishment"], fields["series"], fields["number"], self.state.doc_counter + 1
            ),
        )
        return CTeDocument(
            access_key=key,
            establishment=fields["establishment"],
            series=fields["series"],
            number=fields["number"],
            issue_instant=issue_instant,
            modal=Modal(fields["modal"]),
            origin_uf=fields["origin_uf"],
            dest_uf=fields["dest_uf"],
            freight_value=int(fields["freight_value"]),
            cargo_description=fields["cargo_description"],
        )

    def _refuse_locally(self, key: str, code: int, message: str, now: datetime, report: TickReport) -> None:
        self._append(
            EventKind.RESULT_APPLIED,
            {
                "ref": key,
                "event": LifecycleEvent.LOCALLY_REFUSED.value,
                "code": code,
                "message": message,
                "flow": "issue",
            },
            now,
        )
        report.locally_refused += 1
        report.rejected += 1
        logger.warning("Document %s refused locally: [%s] %s", key, code, message)

    def _signed(self, draft: CTeDocument, now: datetime) -> CTeDocument:
        try:
            Cnpj(draft.establishment)
        except ValueError as exc:
            raise CertificateError(f"CNPJ {draft.establishment} has invalid check digits", CNPJ_MISMATCH) from exc
        return replace(draft, signature=sign(draft, self.config.certificate, now))

    def materialize_drafts(self, now: datetime, report: TickReport) -> None:
        for request in self._open_requests("issue"):
            try:
                draft = self._build_draft(request.fields)
            except (CteError, ValueError, KeyError) as exc:
                self._append(
                    EventKind.INGEST_ERROR,
                    {
                        "file": request.source_file,
                        "line_no": request.line_no,
                        "stage": "build",
                        "message": str(exc),
                        "request_id": request.request_id,
                    },
                    now,
                )
                report.parse_errors += 1
                continue
            try:
                signed = self._signed(draft, now)
            except CertificateError as exc:
                signed, refusal = draft, exc
            else:
                refusal = None
            self._append(
                EventKind.DOC_UPSERTED,
                {
                    "key": signed.key,
                    "xml": canonical_serialize(signed).decode("utf-8"),
                    "request_id": request.request_id,
                    "file": request.source_file,
                    "line_no": request.line_no,
                },
                now,
            )
            report.drafts += 1
            if refusal is not None:
                self._refuse_locally(signed.key, refusal.code, refusal.message, now, report)

    def sign_pending_drafts(self, now: datetime, report: TickReport) -> None:
        """Drafts journaled without a signature were refused, or the refusal never reached the journal."""
        for key in list(self.state.drafts):
            draft = self.state.documents[key].document
            if draft.signature is not None:
                continue
            try:
                signed = self._signed(draft, now)
            except CertificateError as exc:
                self._refuse_locally(key, exc.code, exc.message, now, report)
                continue
            self._append(EventKind.DOC_UPSERTED, {"key": key, "xml": canonical_serialize(signed).decode("utf-8")}, now)
            logger.info("Draft %s signed on recovery", key)

    def run_send_flow(self, now: datetime, report: TickReport | None = None) -> list[int]:
        """Sign new drafts, pack them, and transmit every batch still waiting for a receipt."""
        report = report or TickReport(at=now)
        self.materialize_drafts(now, report)
        self.sign_pending_drafts(now, report)

        ready = [
            self.state.documents[key].document
            for key in list(self.state.drafts)
            if self.state.documents[key].document.signature is not None
        ]
        if ready:
            packed = pack(ready, first_batch_id=self.state.next_batch_id)
            for oversized in packed.oversized:
                self._refuse_locally(oversized.document.key, oversized.code, oversized.message, now, report)
            for batch in packed.batches:
                self._append(
                    EventKind.BATCH_CREATED,
                    {
                        "batch_id": batch.batch_id,
                        "establishment": batch.establishment,
                        "keys": batch.access_keys,
                        "size": batch.serialized_size,
                    },
                    now,
                )
                report.batches_created += 1

        dispatched = []
        for batch_id in list(self.state.unresolved_batches):
            record = self.state.batches[batch_id]
            if record.receipt is not None:
                continue
            try:
                if self._dispatch_batch(record, now, report):
                    dispatched.append(batch_id)
            except TransportError as exc:
                logger.warning("Batch %s not sent: %s", batch_id, exc)
                report.transport_failures += 1
                break
        return dispatched

    def _dispatch_batch(self, record, now: datetime, report: TickReport) -> bool:
        batch = Batch(
            batch_id=record.batch_id,
            establishment=record.establishment,
            documents=[self.state.documents[key].document for key in record.keys],
            serialized_size=record.size,
        )
        data = serialize_batch(batch)
        if record.intent_at is None:
            self._append(EventKind.DISPATCH_INTENT, {"batch_id": record.batch_id}, now)
        report.batches_sent += 1
        code, receipt = self.client.send_batch(data)
        if receipt is not None:
            self._append(
                EventKind.RECEIPT_RECORDED,
                {
                    "batch_id": record.batch_id,
                    "receipt": receipt.number,
                    "received_at": receipt.received_at.isoformat(),
                    "avg_response_time_ms": receipt.avg_response_time_ms,
                    "no_samples": receipt.no_samples,
                },
                now,
            )
            report.receipts += 1
            logger.info("Batch %s accepted with receipt %s", record.batch_id, receipt.number)
            return True
        if code.code in RETRY_CODES:
            logger.warning("Batch %s deferred: %s", record.batch_id, code)
            return False
        for key in record.keys:
            self._append(
                EventKind.RESULT_APPLIED,
                {
                    "ref": key,
                    "event": LifecycleEvent.BATCH_REFUSED.value,
                    "code": code.code,
                    "message": code.message,
                    "batch_id": record.batch_id,
                    "flow": "issue",
                },
                now,
            )
        report.batches_refused += 1
        report.rejected += len(record.keys)
        logger.warning("Batch %s refused: %s", record.batch_id, code)
        return True

    # Results

    def poll_pending(self, now: datetime, report: TickReport | None = None) -> list[int]:
        report = report or TickReport(at=now)
        resolved = []
        for batch_id in list(self.state.unresolved_batches):
            record = self.state.batches[batch_id]
            if record.receipt is None:
                continue
            try:
                code, status = self.client.track_batch(record.receipt)
            except TransportError as exc:
                logger.warning("Polling receipt %s failed: %s", record.receipt, exc)
                report.transport_failures += 1
                break
            report.polled += 1
            if code.code == codes.BATCH_IN_PROCESSING:
                for key in record.keys:
                    if self.state.documents[key].status is LifecycleStatus.TRANSMITTED:
                        self._append(
                            EventKind.STATUS_CHANGED,
                            {"ref": key, "event": LifecycleEvent.TRACKED_PROCESSING.value, "code": code.code},
                            now,
                        )
            elif code.code == codes.BATCH_PROCESSED and status is not None and status.entry is not None:
                self._apply_batch_result(record, status.entry, now, report)
                resolved.append(batch_id)
            elif code.code == codes.NOT_FOUND:
                self._append(
                    EventKind.ANOMALY,
                    {
                        "ref": record.receipt,
                        "batch_id": batch_id,
                        "attention": True,
                        "message": f"Authority does not know receipt {record.receipt}: {code.message}",
                    },
                    now,
                )
                report.anomalies += 1
                logger.error("Receipt %s unknown to the authority; batch %s needs an operator", record.receipt, batch_id)
            else:
                logger.warning("Polling receipt %s answered %s; retrying next tick", record.receipt, code)
        return resolved

    def _apply_batch_result(self, record, entry, now: datetime, report: TickReport) -> None:
        results = {item.access_key: item.code for item in entry.per_document}
        for key in record.keys:
            if key in record.resolved_keys:
                continue
            code = results.get(key)
            if code is None:
                event, code_value, message = LifecycleEvent.DOCUMENT_REJECTED, codes.INTERNAL_ERROR, "Absent from batch result"
            elif code.code == codes.DOCUMENT_APPROVED:
                event, code_value, message = LifecycleEvent.DOCUMENT_APPROVED, code.code, code.message
            else:
                event, code_value, message = LifecycleEvent.DOCUMENT_REJECTED, code.code, code.message
            self._append(
                EventKind.RESULT_APPLIED,
                {
                    "ref": key,
                    "event": event.value,
                    "code": code_value,
                    "message": message,
                    "receipt": record.receipt,
                    "batch_id": record.batch_id,
                    "flow": "issue",
                },
                now,
            )
            if event is LifecycleEvent.DOCUMENT_APPROVED:
                report.approved += 1
            else:
                report.rejected += 1
        logger.info("Batch %s resolved from receipt %s", record.batch_id, record.receipt)

    def track_approved(self, now: datetime, report: TickReport | None = None) -> list[str]:
        report = report or TickReport(at=now)
        confirmed = []
        for key in list(self.state.unconfirmed):
            try:
                code = self.client.track_cte_status(key)
            except TransportError as exc:
                logger.warning("Status tracking for %s failed: %s", key, exc)
                report.transport_failures += 1
                break
            self._append(EventKind.STATUS_CONFIRMED, {"key": key, "code": code.code}, now)
            report.confirmations += 1
            confirmed.append(key)
            if code.code != codes.DOCUMENT_APPROVED:
                self._append(
                    EventKind.ANOMALY,
                    {"ref": key, "message": f"Authority reports {code} while the document is Approved locally"},
                    now,
                )
                report.anomalies += 1
                logger.warning("Status divergence for %s: authority says %s", key, code)
        return confirmed

    # Synchronous request flows

    def _close_request(self, request, code: int, status: str, message: str, now: datetime) -> None:
        self._append(
            EventKind.REQUEST_CLOSED,
            {
                "request_id": request.request_id,
                "ref": request.fields.get("access_key") or self._numbering(request).ref,
                "code": code,
                "status": status,
                "message": message,
            },
            now,
        )
        logger.warning("Request %s closed locally: [%s] %s", request.request_id, code, message)

    @staticmethod
    def _numbering(request) -> NumberingRange:
        fields = request.fields
        return NumberingRange(fields["establishment"], fields["series"], int(fields["first"]), int(fields["last"]))

    def run_withdraw_flow(self, now: datetime, report: TickReport | None = None) -> list[int]:
        report = report or TickReport(at=now)
        done = []
        owners: dict[str, int] = {}
        for request in self._open_requests("cancel"):
            key, reason = request.fields["access_key"], request.fields["reason"]
            owner = owners.setdefault(key, request.request_id)
            record = self.state.documents.get(key)
            try:
                if record is None:
                    self._close_request(request, codes.NOT_FOUND, "Unknown", f"Unknown access key {key}", now)
                    continue
                if record.status is LifecycleStatus.APPROVED and request.intent_at is None:
                    self._append(
                        EventKind.STATUS_CHANGED,
                        {"ref": key, "event": LifecycleEvent.WITHDRAW_SENT.value, "reason": reason},
                        now,
                    )
                    self._append(EventKind.DISPATCH_INTENT, {"request_id": request.request_id}, now)
                elif record.status is LifecycleStatus.CANCELLING:
                    if owner != request.request_id:
                        continue
                    if request.intent_at is None:
                        self._append(EventKind.DISPATCH_INTENT, {"request_id": request.request_id}, now)
                    # Possibly sent before with no answer journaled: ask the authority first.
                    status = self.client.track_cte_status(key)
                    if status.code == codes.CANCELLATION_APPROVED:
                        self._apply_withdraw_result(request, key, status, reason, now, report)
                        done.append(request.request_id)
                        continue
                    if status.code != codes.DOCUMENT_APPROVED:
                        logger.warning("Withdrawal of %s unresolved: authority status %s", key, status)
                        continue
                else:
                    self._close_request(
                        request, codes.ILLEGAL_STATE, record.status.value, f"Cannot cancel a {record.status} document", now
                    )
                    continue
                code = self.client.withdraw(key, reason)
            except TransportError as exc:
                logger.warning("Withdrawal of %s not sent: %s", key, exc)
                report.transport_failures += 1
                break
            if code.code in RETRY_CODES:
                continue
            self._apply_withdraw_result(request, key, code, reason, now, report)
            done.append(request.request_id)
        return done

    def _apply_withdraw_result(self, request, key, code, reason, now, report) -> None:
        cancelled = code.code == codes.CANCELLATION_APPROVED
        event = LifecycleEvent.WITHDRAW_CANCELLED if cancelled else LifecycleEvent.WITHDRAW_REJECTED
        self._append(
            EventKind.RESULT_APPLIED,
            {
                "ref": key,
                "event": event.value,
                "code": code.code,
                "message": code.message,
                "reason": reason if cancelled else "",
                "request_id": request.request_id,
                "flow": "withdraw",
            },
            now,
        )
        report.withdrawals += 1
        if cancelled:
            logger.info("Document %s cancelled", key)
        else:
            self._append(
                EventKind.ANOMALY,
                {"ref": key, "message": f"Withdrawal refused by the authority: {code}"},
                now,
            )
            report.anomalies += 1
            logger.warning("Withdrawal of %s refused: %s", key, code)

    def run_withdraw_numbering_flow(self, now: datetime, report: TickReport | None = None) -> list[int]:
        report = report or TickReport(at=now)
        done = []
        owners: dict[str, int] = {}
        for request in self._open_requests("cancel_numbering"):
            numbering = self._numbering(request)
            reason = request.fields["reason"]
            owner = owners.setdefault(numbering.ref, request.request_id)
            record = self.state.numbering.get(numbering.ref)
            current = record.status if record else LifecycleStatus.DRAFT
            try:
                if current is LifecycleStatus.NUMBERING_CANCELLED:
                    self._close_request(
                        request, codes.NUMBERING_CANCELLATION_APPROVED, current.value, "Range already withdrawn", now
                    )
                    continue
                if current is LifecycleStatus.CANCELLING_NUMBERING:
                    if owner != request.request_id:
                        continue
                    # The authority answers a repeated range withdrawal the same way.
                    if request.intent_at is None:
                        self._append(EventKind.DISPATCH_INTENT, {"request_id": request.request_id}, now)
                else:
                    used = self._used_numbers(numbering)
                    if used:
                        self._close_request(
                            request,
                            codes.ILLEGAL_STATE,
                            current.value,
                            f"Numbers already in use: {', '.join(used[:5])}",
                            now,
                        )
                        continue
                    self._append(
                        EventKind.STATUS_CHANGED,
                        {"ref": numbering.ref, "event": LifecycleEvent.NUMBERING_WITHDRAW_SENT.value, "reason": reason},
                        now,
                    )
                    self._append(EventKind.DISPATCH_INTENT, {"request_id": request.request_id}, now)
                code = self.client.withdraw_numbering(numbering, reason)
            except TransportError as exc:
                logger.warning("Numbering withdrawal %s not sent: %s", numbering.ref, exc)
                report.transport_failures += 1
                break
            if code.code in RETRY_CODES:
                continue
            withdrawn = code.code == codes.NUMBERING_CANCELLATION_APPROVED
            event = LifecycleEvent.NUMBERING_CANCELLED if withdrawn else LifecycleEvent.NUMBERING_REJECTED
            self._append(
                EventKind.RESULT_APPLIED,
                {
                    "ref": numbering.ref,
                    "event": event.value,
                    "code": code.code,
                    "message": code.message,
                    "reason": reason,
                    "request_id": request.request_id,
                    "flow": "numbering",
                },
                now,
            )
            report.numbering += 1
            done.append(request.request_id)
            if not withdrawn:
                self._append(
                    EventKind.ANOMALY,
                    {"ref": numbering.ref, "message": f"Numbering withdrawal refused: {code}"},
                    now,
                )
                report.anomalies += 1
        return done

    def _used_numbers(self, numbering: NumberingRange) -> list[str]:
        return sorted(
            record.document.number
            for record in self.state.documents.values()
            if record.establishment == numbering.establishment
            and record.document.series == numbering.series
            and int(record.document.number) in numbering
            and record.status is not LifecycleStatus.DRAFT
        )

    def run_correction_flow(self, now: datetime, report: TickReport | None = None) -> list[int]:
        report = report or TickReport(at=now)
        done = []
        for request in self._open_requests("correct"):
            key, text = request.fields["access_key"], request.fields["text"]
            record = self.state.documents.get(key)
            if record is None:
                self._close_request(request, codes.NOT_FOUND, "Unknown", f"Unknown access key {key}", now)
                continue
            if record.status is not LifecycleStatus.APPROVED:
                self._close_request(
                    request, codes.ILLEGAL_STATE, record.status.value, f"Cannot correct a {record.status} document", now
                )
                continue
            try:
                if request.intent_at is None:
                    self._append(EventKind.DISPATCH_INTENT, {"request_id": request.request_id}, now)
                code = self.client.correct(key, text)
            except TransportError as exc:
                logger.warning("Correction of %s not sent: %s", key, exc)
                report.transport_failures += 1
                break
            if code.code in RETRY_CODES:
                continue
            if code.code == codes.CORRECTION_REGISTERED:
                self._append(
                    EventKind.CORRECTION_NOTED,
                    {"key": key, "text": text, "code": code.code, "request_id": request.request_id},
                    now,
                )
            else:
                self._close_request(request, code.code, record.status.value, code.message, now)
            report.corrections += 1
            done.append(request.request_id)
        return done
