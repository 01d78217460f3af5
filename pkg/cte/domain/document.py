"""CT-e documents and their canonical XML form."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum

from lxml import etree

from .access_key import AccessKey, parse_access_key
from .errors import FieldWidthError
from .lifecycle import LifecycleEvent, LifecycleStatus, transition
from .signing import Signature
from .uf import normalize_uf

# XML 1.0 forbids these code points in character data.
XML_INVALID_RE = re.compile("[\x00-\x08\x0b\x0c\x0e-\x1f\ufffe\uffff]")

_PARSER = etree.XMLParser(resolve_entities=False, no_network=True, remove_blank_text=False)


class Modal(str, Enum):
    HIGHWAY = "highway"
    AERIAL = "aerial"
    PIPELINE = "pipeline"
    WATERWAY = "waterway"
    RAIL = "rail"

    def __str__(self):
        return self.value


def format_instant(value: datetime) -> str:
    return value.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def parse_instant(text: str) -> datetime:
    value = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if value.tzinfo is None:
        raise ValueError(f"Timestamp without offset: {text!r}")
    return value.astimezone(timezone.utc)


def _digits(name: str, value: str, width: int) -> None:
    if not isinstance(value, str) or len(value) != width or not (value.isascii() and value.isdigit()):
        raise FieldWidthError(f"{name} must be exactly {width} decimal digits, got {value!r}")


@dataclass(frozen=True)
class CTeDocument:
    access_key: AccessKey
    establishment: str
    series: str
    number: str
    issue_instant: datetime
    modal: Modal
    origin_uf: str
    dest_uf: str
    freight_value: int
    cargo_description: str
    signature: Signature | None = None
    status: LifecycleStatus = LifecycleStatus.DRAFT
    correction_notes: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        _digits("establishment", self.establishment, 14)
        _digits("series", self.series, 3)
        _digits("number", self.number, 9)
        if self.issue_instant.tzinfo is None:
            raise ValueError("issue_instant must be timezone-aware")
        object.__setattr__(self, "modal", Modal(self.modal))
        object.__setattr__(self, "status", LifecycleStatus(self.status))
        for name in ("origin_uf", "dest_uf"):
            abbreviation = normalize_uf(getattr(self, name))
            if abbreviation is None:
                raise ValueError(f"{name} is not a federation unit: {getattr(self, name)!r}")
            object.__setattr__(self, name, abbreviation)
        if isinstance(self.freight_value, bool) or not isinstance(self.freight_value, int) or self.freight_value < 0:
            raise ValueError("freight_value must be a non-negative integer amount of cents")
        if XML_INVALID_RE.search(self.cargo_description):
            raise ValueError("cargo_description contains characters XML 1.0 cannot carry")
        key = self.access_key
        if (key.issuer, key.series, key.number) != (self.establishment, self.series, self.number):
            raise ValueError("Access key does not match establishment/series/number")
        if key.yymm != self.issue_instant.astimezone(timezone.utc).strftime("%y%m"):
            raise ValueError("Access key year-month does not match issue_instant")

    @property
    def key(self) -> str:
        return str(self.access_key)

    def with_status(self, event: LifecycleEvent) -> "CTeDocument":
        return replace(self, status=transition(self.status, event))


def _element(parent, tag: str, text: str):
    child = etree.SubElement(parent, tag)
    child.text = text
    return child


def document_element(doc: CTeDocument, include_signature: bool = True):
    root = etree.Element("cte")
    _element(root, "accessKey", doc.key)
    _element(root, "establishment", doc.establishment)
    _element(root, "series", doc.series)
    _element(root, "number", doc.number)
    _element(root, "issueInstant", format_instant(doc.issue_instant))
    _element(root, "modal", doc.modal.value)
    _element(root, "originUF", doc.origin_uf)
    _element(root, "destUF", doc.dest_uf)
    _element(root, "freightValueCents", str(doc.freight_value))
    _element(root, "cargoDescription", doc.cargo_description)
    if include_signature and doc.signature is not None:
        signature = etree.SubElement(root, "signature")
        _element(signature, "keyId", doc.signature.key_id.hex())
        _element(signature, "digest", doc.signature.digest.hex())
    return root


def canonical_serialize(doc: CTeDocument, include_signature: bool = True) -> bytes:
    return etree.tostring(document_element(doc, include_signature), encoding="UTF-8", xml_declaration=False)


def _text(root, tag: str) -> str:
    child = root.find(tag)
    if child is None:
        raise ValueError(f"<cte> is missing <{tag}>")
    return child.text or ""


def document_from_element(root) -> CTeDocument:
    if root.tag != "cte":
        raise ValueError(f"Expected <cte>, got <{root.tag}>")
    signature = None
    signature_el = root.find("signature")
    if signature_el is not None:
        signature = Signature(
            key_id=bytes.fromhex(_text(signature_el, "keyId")),
            digest=bytes.fromhex(_text(signature_el, "digest")),
        )
    freight = _text(root, "freightValueCents")
    if not freight.isdigit():
        raise ValueError(f"freightValueCents is not an integer: {freight!r}")
    return CTeDocument(
        access_key=parse_access_key(_text(root, "accessKey")),
        establishment=_text(root, "establishment"),
        series=_text(root, "series"),
        number=_text(root, "number"),
        issue_instant=parse_instant(_text(root, "issueInstant")),
        modal=Modal(_text(root, "modal")),
        origin_uf=_text(root, "originUF"),
        dest_uf=_text(root, "destUF"),
        freight_value=int(freight),
        cargo_description=_text(root, "cargoDescription"),
        signature=signature,
    )


def parse_xml(data: bytes):
    return etree.fromstring(data, parser=_PARSER)


def parse_document(data: bytes) -> CTeDocument:
    return document_from_element(parse_xml(data))
