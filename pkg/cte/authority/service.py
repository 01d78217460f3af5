"""Simulated fiscal authority: validation, FIFO processing and synchronous services."""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path

from lxml import etree

from cte.clock import SystemClock
from cte.domain.access_key import parse_access_key, verify_access_key
from cte.domain.cnpj import validate_cnpj
from cte.domain.errors import CertificateError, EnvelopeError, FieldWidthError
from cte.domain.signing import Certificate, check_certificate, verify
from cte.domain.uf import is_valid_uf_code
from cte.services.batcher import MAX_BATCH_BYTES, MAX_DOCUMENTS, batch_document_count, parse_batch
from cte.wire import codes
from cte.wire.bodies import (
    BatchStatus,
    DocumentResult,
    NumberingRange,
    OutputEntry,
    Receipt,
    ServiceStatus,
    parse_correction,
    parse_track_batch,
    parse_track_status,
    parse_withdraw,
    parse_withdraw_numbering,
)
from cte.wire.codes import ResultCode, result_code
from cte.wire.envelope import SUPPORTED_VERSIONS, ServiceEnvelope, ServiceKind, decode_request, encode_response

from .metrics import ResponseTimeWindow

logger = logging.getLogger(__name__)

RETENTION = timedelta(hours=24)
MIN_REASON_LENGTH = 15


class Environment(str, Enum):
    APPROVAL = "approval"
    PRODUCTION = "production"

    def __str__(self):
        return self.value


class CertificateRegistry:
    def __init__(self, certificates=()):
        self._by_ref: dict[str, Certificate] = {}
        self._lock = threading.Lock()
        for cert in certificates:
            self.register(cert)

    def register(self, cert: Certificate) -> None:
        with self._lock:
            self._by_ref[cert.key_ref] = cert

    def get(self, key_ref: str) -> Certificate | None:
        with self._lock:
            return self._by_ref.get((key_ref or "").lower())

    def __len__(self):
        return len(self._by_ref)

    @classmethod
    def from_json(cls, path) -> "CertificateRegistry":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(Certificate.from_dict(item) for item in data)


class ProductionRegistry:
    """CNPJs cleared for the production environment; shared across instances."""

    def __init__(self, cnpjs=()):
        self._cnpjs = set(cnpjs)
        self._lock = threading.Lock()

    def enable(self, cnpj: str) -> None:
        with self._lock:
            if cnpj not in self._cnpjs:
                logger.info("CNPJ %s enabled for production", cnpj)
            self._cnpjs.add(cnpj)

    def is_enabled(self, cnpj: str) -> bool:
        with self._lock:
            return cnpj in self._cnpjs


@dataclass
class QueuedBatch:
    receipt: Receipt
    data: bytes
    certificate: Certificate
    ready_at: datetime


@dataclass
class IssuedDocument:
    access_key: str
    issuer: str
    series: str
    number: str
    cancelled: bool = False
    correction_notes: list[str] = field(default_factory=list)


def make_receipt_number(uf: str, epoch_seconds: int, seq: int = 0) -> int:
    return int(f"{uf}{epoch_seconds:010d}{seq:03d}")


class Authority:
    """All state mutations go through one re-entrant lock."""

    def __init__(
        self,
        *,
        environment: Environment | str = Environment.APPROVAL,
        uf: str = "35",
        delay: timedelta = timedelta(0),
        certificates: CertificateRegistry | None = None,
        production: ProductionRegistry | None = None,
        supported_versions=SUPPORTED_VERSIONS,
        clock=None,
    ):
        if not is_valid_uf_code(uf):
            raise ValueError(f"Invalid authority federation unit {uf!r}")
        self.environment = Environment(environment)
        self.uf = uf
        self.delay = delay
        self.certificates = certificates or CertificateRegistry()
        self.production = production or ProductionRegistry()
        self.supported_versions = frozenset(supported_versions)
        self.clock = clock or SystemClock()
        self.paused = False

        self.input_queue: deque[QueuedBatch] = deque()
        self.output_queue: dict[str, OutputEntry] = {}
        self.issued: dict[str, IssuedDocument] = {}
        self.numbers: dict[tuple[str, str, str], str] = {}
        self.rejected_keys: set[str] = set()
        self.numbering_void: list[NumberingRange] = []
        self.submissions: dict[tuple[str, str], Receipt] = {}
        self.completed: list[str] = []
        self.received_count = 0
        self.processed_count = 0
        self.metrics = ResponseTimeWindow()
        self._last_receipt = 0
        self._lock = threading.RLock()

    # Views of the state

    @property
    def approved_keys(self) -> set[str]:
        with self._lock:
            return {key for key, doc in self.issued.items() if not doc.cancelled}

    @property
    def cancelled_keys(self) -> set[str]:
        with self._lock:
            return {key for key, doc in self.issued.items() if doc.cancelled}

    @property
    def queue_depth(self) -> int:
        with self._lock:
            return len(self.input_queue)

    def pause(self) -> None:
        with self._lock:
            self.paused = True
        logger.warning("Authority paused; batches will be answered with %s", codes.SERVICE_PARALYSED)

    def resume(self) -> None:
        with self._lock:
            self.paused = False
        logger.info("Authority resumed")

    # Shared checks

    def _check_envelope(self, env: ServiceEnvelope) -> ResultCode | None:
        if env.version not in self.supported_versions:
            return result_code(codes.UNSUPPORTED_VERSION, f"Unsupported version {env.version!r}")
        if not is_valid_uf_code(env.uf):
            return result_code(codes.INVALID_UF, f"Invalid or absent federation unit {env.uf!r}")
        return None

    def _authenticate(self, env: ServiceEnvelope, now: datetime) -> Certificate | ResultCode:
        refused = self._check_envelope(env)
        if refused is not None:
            return refused
        cert = self.certificates.get(env.certificate_ref)
        try:
            check_certificate(cert, cert.subject_cnpj if cert else "", now)
        except CertificateError as exc:
            return result_code(exc.code, exc.message)
        return cert

    def _next_receipt_number(self, now: datetime) -> str:
        candidate = make_receipt_number(self.uf, int(now.timestamp()))
        self._last_receipt = max(candidate, self._last_receipt + 1)
        return str(self._last_receipt)

    # Asynchronous services

    def receive_batch(self, env: ServiceEnvelope, now: datetime) -> Receipt | ResultCode:
        with self._lock:
            if self.paused:
                return result_code(codes.SERVICE_PARALYSED)
            cert = self._authenticate(env, now)
            if isinstance(cert, ResultCode):
                return cert
            data = env.body
            if len(data) > MAX_BATCH_BYTES:
                return result_code(codes.BATCH_TOO_LARGE, f"Batch of {len(data)} bytes exceeds {MAX_BATCH_BYTES}")
            count = batch_document_count(data)
            if count < 0:
                return result_code(codes.XML_MALFORMED, "Batch is not well-formed XML")
            if count > MAX_DOCUMENTS:
                return result_code(codes.BATCH_TOO_MANY_DOCUMENTS, f"Batch holds {count} documents")
            try:
                content = parse_batch(data)
            except (etree.XMLSyntaxError, ValueError, FieldWidthError) as exc:
                return result_code(codes.XML_MALFORMED, f"XML formatting failure: {exc}")

            valid_cnpjs = {doc.establishment for doc in content.documents if validate_cnpj(doc.establishment)}
            if len(valid_cnpjs) > 1:
                return result_code(codes.MIXED_ESTABLISHMENTS)
            batch_cnpj = next(iter(valid_cnpjs), None)
            if batch_cnpj is not None and batch_cnpj != cert.subject_cnpj:
                return result_code(
                    codes.CERTIFICATE_CNPJ_MISMATCH,
                    f"Batch establishment {batch_cnpj} differs from certificate subject {cert.subject_cnpj}",
                )
            if self.environment is Environment.PRODUCTION and not self.production.is_enabled(cert.subject_cnpj):
                return result_code(
                    codes.CERTIFICATE_PREREQUISITES,
                    f"CNPJ {cert.subject_cnpj} is not enabled for production",
                )

            fingerprint = (cert.key_ref, hashlib.sha256(data).hexdigest())
            previous = self.submissions.get(fingerprint)
            if previous is not None:
                logger.info("Batch resubmitted; answering original receipt %s", previous.number)
                return previous

            self.metrics.prune(now)
            average = self.metrics.average(now)
            receipt = Receipt(
                number=self._next_receipt_number(now),
                received_at=now,
                receiving_place=self.uf,
                avg_response_time_ms=average or 0,
                no_samples=average is None,
            )
            self.input_queue.append(QueuedBatch(receipt, data, cert, ready_at=now + self.delay))
            self.submissions[fingerprint] = receipt
            self.received_count += 1
            logger.info("Receipt %s issued for %d document(s) from %s", receipt.number, count, cert.subject_cnpj)
            return receipt

    def process_next(self, now: datetime) -> OutputEntry | None:
        with self._lock:
            if not self.input_queue or self.input_queue[0].ready_at > now:
                return None
            queued = self.input_queue.popleft()
            per_document = tuple(self._judge_documents(queued))
            entry = OutputEntry(
                receipt=queued.receipt.number,
                received_at=queued.receipt.received_at,
                completed_at=now,
                batch_code=result_code(codes.BATCH_PROCESSED),
                per_document=per_document,
            )
            self.output_queue[entry.receipt] = entry
            self.completed.append(entry.receipt)
            self.metrics.record(entry.received_at, entry.completed_at)
            self.processed_count += 1
            if self.environment is Environment.APPROVAL and all(
                item.code.code == codes.DOCUMENT_APPROVED for item in per_document
            ):
                self.production.enable(queued.certificate.subject_cnpj)
            approved = sum(1 for item in per_document if item.code.code == codes.DOCUMENT_APPROVED)
            logger.info("Batch %s processed: %d/%d approved", entry.receipt, approved, len(per_document))
            return entry

    def pump(self, now: datetime) -> list[OutputEntry]:
        entries = []
        while True:
            entry = self.process_next(now)
            if entry is None:
                return entries
            entries.append(entry)

    def _judge_documents(self, queued: QueuedBatch):
        cert = queued.certificate
        for doc in parse_batch(queued.data).documents:
            key = doc.key
            issuer = doc.access_key.issuer
            triple = (issuer, doc.series, doc.number)
            if not validate_cnpj(issuer) or issuer != cert.subject_cnpj:
                code = result_code(codes.CERTIFICATE_CNPJ_MISMATCH, f"CNPJ {issuer} is invalid or not the certificate subject")
            elif not verify(doc, doc.signature, cert):
                code = result_code(codes.INVALID_SIGNATURE)
            elif not verify_access_key(key):
                code = result_code(codes.INVALID_ACCESS_KEY)
            elif key in self.issued or triple in self.numbers:
                code = result_code(codes.DUPLICATE_ACCESS_KEY)
            elif self._voided(issuer, doc.series, doc.number):
                code = result_code(codes.DUPLICATE_ACCESS_KEY, f"Number {doc.number} was withdrawn from use")
            else:
                code = result_code(codes.DOCUMENT_APPROVED)
                self.issued[key] = IssuedDocument(key, issuer, doc.series, doc.number)
                self.numbers[triple] = key
                self.rejected_keys.discard(key)
            if code.code != codes.DOCUMENT_APPROVED:
                if key not in self.issued:
                    self.rejected_keys.add(key)
                logger.warning("Document %s rejected: %s", key, code)
            yield DocumentResult(access_key=key, code=code)

    def _voided(self, establishment: str, series: str, number: str) -> bool:
        return any(
            r.establishment == establishment and r.series == series and int(number) in r
            for r in self.numbering_void
        )

    def track_batch(self, env: ServiceEnvelope, receipt: str, now: datetime) -> BatchStatus | ResultCode:
        with self._lock:
            cert = self._authenticate(env, now)
            if isinstance(cert, ResultCode):
                return cert
            entry = self.output_queue.get(receipt)
            if entry is not None:
                return BatchStatus(receipt=receipt, entry=entry)
            if any(queued.receipt.number == receipt for queued in self.input_queue):
                return BatchStatus(receipt=receipt)
            return result_code(codes.NOT_FOUND, f"Unknown or expired receipt {receipt}")

    def purge_output(self, now: datetime) -> int:
        with self._lock:
            cutoff = now - RETENTION
            expired = [number for number, entry in self.output_queue.items() if entry.completed_at <= cutoff]
            for number in expired:
                del self.output_queue[number]
            if expired:
                gone = set(expired)
                self.submissions = {k: v for k, v in self.submissions.items() if v.number not in gone}
                logger.info("Purged %d output entries", len(expired))
            return len(expired)

    # Synchronous services

    def _lookup(self, access_key: str) -> IssuedDocument | ResultCode:
        if access_key in self.issued:
            return self.issued[access_key]
        if access_key in self.rejected_keys:
            return result_code(codes.ILLEGAL_STATE, f"Document {access_key} was rejected")
        return result_code(codes.NOT_FOUND, f"Unknown access key {access_key}")

    def withdraw(self, env: ServiceEnvelope, access_key: str, reason: str, now: datetime) -> ResultCode:
        with self._lock:
            cert = self._authenticate(env, now)
            if isinstance(cert, ResultCode):
                return cert
            if len((reason or "").strip()) < MIN_REASON_LENGTH:
                return result_code(codes.XML_MALFORMED, f"Reason must have at least {MIN_REASON_LENGTH} characters")
            found = self._lookup(access_key)
            if isinstance(found, ResultCode):
                return found
            if found.issuer != cert.subject_cnpj:
                return result_code(codes.CERTIFICATE_CNPJ_MISMATCH)
            if found.cancelled:
                return result_code(codes.ILLEGAL_STATE, f"Document {access_key} is already cancelled")
            found.cancelled = True
            logger.info("Document %s cancelled", access_key)
            return result_code(codes.CANCELLATION_APPROVED)

    def withdraw_numbering(
        self, env: ServiceEnvelope, numbering: NumberingRange, reason: str, now: datetime
    ) -> ResultCode:
        with self._lock:
            cert = self._authenticate(env, now)
            if isinstance(cert, ResultCode):
                return cert
            if numbering.first > numbering.last:
                return result_code(codes.XML_MALFORMED, "Numbering range start is after its end")
            if len((reason or "").strip()) < MIN_REASON_LENGTH:
                return result_code(codes.XML_MALFORMED, f"Reason must have at least {MIN_REASON_LENGTH} characters")
            if numbering.establishment != cert.subject_cnpj:
                return result_code(codes.CERTIFICATE_CNPJ_MISMATCH)
            if numbering in self.numbering_void:
                return result_code(codes.NUMBERING_CANCELLATION_APPROVED)
            for establishment, series, number in self.numbers:
                if establishment == numbering.establishment and series == numbering.series and int(number) in numbering:
                    return result_code(codes.ILLEGAL_STATE, f"Number {number} of series {series} was already used")
            self.numbering_void.append(numbering)
            logger.info("Numbering %s withdrawn", numbering.ref)
            return result_code(codes.NUMBERING_CANCELLATION_APPROVED)

    def track_cte_status(self, env: ServiceEnvelope, access_key: str, now: datetime) -> ResultCode:
        with self._lock:
            cert = self._authenticate(env, now)
            if isinstance(cert, ResultCode):
                return cert
            found = self.issued.get(access_key)
            if found is not None:
                return result_code(codes.CANCELLATION_APPROVED if found.cancelled else codes.DOCUMENT_APPROVED)
            try:
                key = parse_access_key(access_key)
            except FieldWidthError:
                return result_code(codes.NOT_FOUND, f"Unknown access key {access_key}")
            if self._voided(key.issuer, key.series, key.number):
                return result_code(codes.NUMBERING_CANCELLATION_APPROVED)
            return result_code(codes.NOT_FOUND, f"Unknown access key {access_key}")

    def correct(self, env: ServiceEnvelope, access_key: str, text: str, now: datetime) -> ResultCode:
        with self._lock:
            cert = self._authenticate(env, now)
            if isinstance(cert, ResultCode):
                return cert
            if not (text or "").strip():
                return result_code(codes.XML_MALFORMED, "Correction text is empty")
            found = self._lookup(access_key)
            if isinstance(found, ResultCode):
                return found
            if found.cancelled:
                return result_code(codes.ILLEGAL_STATE, f"Document {access_key} is cancelled")
            found.correction_notes.append(text)
            return result_code(codes.CORRECTION_REGISTERED)

    def service_status(self, now: datetime) -> ServiceStatus:
        with self._lock:
            self.metrics.prune(now)
            average = self.metrics.average(now)
            return ServiceStatus(
                code=result_code(codes.SERVICE_PARALYSED if self.paused else codes.SERVICE_IN_OPERATION),
                avg_response_time_ms=average or 0,
                no_samples=average is None,
                queue_depth=len(self.input_queue),
            )

    # Byte-level entry point shared by HTTP views and the in-process transport

    def handle(self, service: ServiceKind | None, request: bytes, now: datetime | None = None) -> bytes:
        now = now or self.clock.now()
        try:
            env = decode_request(request, self.supported_versions)
            if service is not None and env.service is not service:
                return encode_response(
                    result_code(codes.XML_MALFORMED, f"{env.service} request sent to the {service} endpoint")
                )
            return self._dispatch(env, now)
        except EnvelopeError as exc:
            return encode_response(exc.result)
        except (etree.XMLSyntaxError, ValueError) as exc:
            return encode_response(result_code(codes.XML_MALFORMED, f"XML formatting failure: {exc}"))
        except Exception:
            logger.exception("Unhandled error serving %s", service)
            return encode_response(result_code(codes.INTERNAL_ERROR))

    def _dispatch(self, env: ServiceEnvelope, now: datetime) -> bytes:
        kind = env.service
        if kind is ServiceKind.SEND_BATCH:
            outcome = self.receive_batch(env, now)
            if isinstance(outcome, ResultCode):
                return encode_response(outcome)
            return encode_response(result_code(codes.BATCH_RECEIVED), outcome.to_element())
        if kind is ServiceKind.TRACK_BATCH:
            outcome = self.track_batch(env, parse_track_batch(env.body), now)
            if isinstance(outcome, ResultCode):
                return encode_response(outcome)
            code = codes.BATCH_PROCESSED if outcome.processed else codes.BATCH_IN_PROCESSING
            return encode_response(result_code(code), outcome.to_element())
        if kind is ServiceKind.WITHDRAW_CTE:
            access_key, reason = parse_withdraw(env.body)
            return encode_response(self.withdraw(env, access_key, reason, now))
        if kind is ServiceKind.WITHDRAW_NUMBERING:
            numbering, reason = parse_withdraw_numbering(env.body)
            return encode_response(self.withdraw_numbering(env, numbering, reason, now))
        if kind is ServiceKind.TRACK_CTE_STATUS:
            return encode_response(self.track_cte_status(env, parse_track_status(env.body), now))
        if kind is ServiceKind.CORRECT_CTE:
            access_key, text = parse_correction(env.body)
            return encode_response(self.correct(env, access_key, text, now))
        status = self.service_status(now)
        return encode_response(status.code, status.to_element())
