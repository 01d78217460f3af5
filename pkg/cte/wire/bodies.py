"""Service bodies carried inside envelopes, with their XML builders and parsers."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime

from lxml import etree

from cte.domain.document import format_instant, parse_instant

from .codes import ResultCode, result_code

_PARSER = etree.XMLParser(resolve_entities=False, no_network=True)


def _tostring(element) -> bytes:
    return etree.tostring(element, encoding="UTF-8", xml_declaration=False)


def _root(body: bytes, tag: str):
    root = etree.fromstring(body, parser=_PARSER)
    if root.tag != tag:
        raise ValueError(f"Expected <{tag}>, got <{root.tag}>")
    return root


def _required(root, name: str) -> str:
    value = root.get(name)
    if value is None or value == "":
        raise ValueError(f"<{root.tag}> is missing attribute {name}")
    return value


def _child_text(root, tag: str) -> str:
    child = root.find(tag)
    return "" if child is None else (child.text or "")


# Requests


def track_batch_body(receipt: str) -> bytes:
    return _tostring(etree.Element("trackBatch", receipt=receipt))


def parse_track_batch(body: bytes) -> str:
    return _required(_root(body, "trackBatch"), "receipt")


def withdraw_body(access_key: str, reason: str) -> bytes:
    root = etree.Element("withdraw", accessKey=access_key)
    etree.SubElement(root, "reason").text = reason
    return _tostring(root)


def parse_withdraw(body: bytes) -> tuple[str, str]:
    root = _root(body, "withdraw")
    return _required(root, "accessKey"), _child_text(root, "reason")


@dataclass(frozen=True)
class NumberingRange:
    establishment: str
    series: str
    first: int
    last: int

    @property
    def ref(self) -> str:
        return f"NUM:{self.establishment}:{self.series}:{self.first}-{self.last}"

    def __contains__(self, number) -> bool:
        return self.first <= int(number) <= self.last

    @classmethod
    def from_ref(cls, ref: str) -> "NumberingRange":
        prefix, establishment, series, span = ref.split(":")
        if prefix != "NUM":
            raise ValueError(f"Not a numbering reference: {ref!r}")
        first, last = span.split("-")
        return cls(establishment, series, int(first), int(last))


def withdraw_numbering_body(numbering: NumberingRange, reason: str) -> bytes:
    root = etree.Element(
        "withdrawNumbering",
        establishment=numbering.establishment,
        series=numbering.series,
        **{"from": str(numbering.first), "to": str(numbering.last)},
    )
    etree.SubElement(root, "reason").text = reason
    return _tostring(root)


def parse_withdraw_numbering(body: bytes) -> tuple[NumberingRange, str]:
    root = _root(body, "withdrawNumbering")
    first, last = _required(root, "from"), _required(root, "to")
    if not (first.isdigit() and last.isdigit()):
        raise ValueError("Numbering range bounds must be integers")
    numbering = NumberingRange(
        establishment=_required(root, "establishment"),
        series=_required(root, "series"),
        first=int(first),
        last=int(last),
    )
    return numbering, _child_text(root, "reason")


def track_status_body(access_key: str) -> bytes:
    return _tostring(etree.Element("trackStatus", accessKey=access_key))


def parse_track_status(body: bytes) -> str:
    return _required(_root(body, "trackStatus"), "accessKey")


def correction_body(access_key: str, text: str) -> bytes:
    root = etree.Element("correction", accessKey=access_key)
    etree.SubElement(root, "text").text = text
    return _tostring(root)


def parse_correction(body: bytes) -> tuple[str, str]:
    root = _root(body, "correction")
    return _required(root, "accessKey"), _child_text(root, "text")


def service_status_request() -> bytes:
    return _tostring(etree.Element("serviceStatus"))


# Responses


@dataclass(frozen=True)
class Receipt:
    number: str
    received_at: datetime
    receiving_place: str
    avg_response_time_ms: int
    no_samples: bool

    def to_element(self):
        return etree.Element(
            "receipt",
            number=self.number,
            receivedAt=format_instant(self.received_at),
            receivingPlace=self.receiving_place,
            avgResponseTimeMs=str(self.avg_response_time_ms),
            noSamples="true" if self.no_samples else "false",
        )

    @classmethod
    def from_body(cls, body: bytes) -> "Receipt":
        root = _root(body, "receipt")
        return cls(
            number=_required(root, "number"),
            received_at=parse_instant(_required(root, "receivedAt")),
            receiving_place=_required(root, "receivingPlace"),
            avg_response_time_ms=int(_required(root, "avgResponseTimeMs")),
            no_samples=root.get("noSamples") == "true",
        )


@dataclass(frozen=True)
class DocumentResult:
    access_key: str
    code: ResultCode


@dataclass(frozen=True)
class OutputEntry:
    receipt: str
    received_at: datetime
    completed_at: datetime
    batch_code: ResultCode
    per_document: tuple[DocumentResult, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class BatchStatus:
    """Answer to TrackBatch: processing (no entry) or processed (entry)."""

    receipt: str
    entry: OutputEntry | None = None

    @property
    def processed(self) -> bool:
        return self.entry is not None

    def to_element(self):
        root = etree.Element("batchResult", receipt=self.receipt)
        root.set("status", "processed" if self.processed else "processing")
        if self.entry is not None:
            root.set("receivedAt", format_instant(self.entry.received_at))
            root.set("completedAt", format_instant(self.entry.completed_at))
            root.set("code", str(self.entry.batch_code.code))
            for item in self.entry.per_document:
                etree.SubElement(
                    root,
                    "doc",
                    accessKey=item.access_key,
                    code=str(item.code.code),
                    message=item.code.message,
                )
        return root

    @classmethod
    def from_body(cls, body: bytes) -> "BatchStatus":
        root = _root(body, "batchResult")
        receipt = _required(root, "receipt")
        if root.get("status") != "processed":
            return cls(receipt=receipt)
        per_document = tuple(
            DocumentResult(
                access_key=_required(doc, "accessKey"),
                code=result_code(int(_required(doc, "code")), doc.get("message")),
            )
            for doc in root.iter("doc")
        )
        entry = OutputEntry(
            receipt=receipt,
            received_at=parse_instant(_required(root, "receivedAt")),
            completed_at=parse_instant(_required(root, "completedAt")),
            batch_code=result_code(int(_required(root, "code"))),
            per_document=per_document,
        )
        return cls(receipt=receipt, entry=entry)


@dataclass(frozen=True)
class ServiceStatus:
    code: ResultCode
    avg_response_time_ms: int
    no_samples: bool
    queue_depth: int

    def to_element(self):
        return etree.Element(
            "serviceStatus",
            avgResponseTimeMs=str(self.avg_response_time_ms),
            noSamples="true" if self.no_samples else "false",
            queueDepth=str(self.queue_depth),
        )

    @classmethod
    def from_response(cls, code: ResultCode, body: bytes) -> "ServiceStatus":
        root = _root(body, "serviceStatus")
        return cls(
            code=code,
            avg_response_time_ms=int(root.get("avgResponseTimeMs", "0")),
            no_samples=root.get("noSamples") == "true",
            queue_depth=int(root.get("queueDepth", "0")),
        )
