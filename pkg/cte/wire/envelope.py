"""Request and response envelopes exchanged with the authority."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from lxml import etree

from cte.domain.errors import EnvelopeError
from cte.domain.uf import is_valid_uf_code

from . import codes
from .codes import ResultCode, result_code

DEFAULT_VERSION = "1.04"
SUPPORTED_VERSIONS = frozenset({DEFAULT_VERSION})

_PARSER = etree.XMLParser(resolve_entities=False, no_network=True)


class ServiceKind(str, Enum):
    SEND_BATCH = "SendBatch"
    TRACK_BATCH = "TrackBatch"
    WITHDRAW_CTE = "WithdrawCte"
    WITHDRAW_NUMBERING = "WithdrawNumbering"
    TRACK_CTE_STATUS = "TrackCteStatus"
    CORRECT_CTE = "CorrectCte"
    TRACK_SERVICE_STATUS = "TrackServiceStatus"

    def __str__(self):
        return self.value

    @property
    def path(self) -> str:
        return SERVICE_PATHS[self]

    @property
    def is_asynchronous(self) -> bool:
        return self in (ServiceKind.SEND_BATCH, ServiceKind.TRACK_BATCH)

    @classmethod
    def from_path(cls, path: str) -> "ServiceKind | None":
        slug = path.strip("/").rsplit("/", 1)[-1]
        for kind, kind_path in SERVICE_PATHS.items():
            if kind_path.rsplit("/", 1)[-1] == slug:
                return kind
        return None


SERVICE_PATHS = {
    ServiceKind.SEND_BATCH: "/ws/send-batch",
    ServiceKind.TRACK_BATCH: "/ws/track-batch",
    ServiceKind.WITHDRAW_CTE: "/ws/withdraw",
    ServiceKind.WITHDRAW_NUMBERING: "/ws/withdraw-numbering",
    ServiceKind.TRACK_CTE_STATUS: "/ws/track-status",
    ServiceKind.CORRECT_CTE: "/ws/correct",
    ServiceKind.TRACK_SERVICE_STATUS: "/ws/service-status",
}


@dataclass(frozen=True)
class ServiceEnvelope:
    service: ServiceKind
    version: str
    uf: str
    certificate_ref: str
    body: bytes

    def to_bytes(self) -> bytes:
        root = etree.Element("cteRequest")
        root.set("service", self.service.value)
        root.set("version", self.version)
        root.set("uf", self.uf)
        root.set("certRef", self.certificate_ref)
        if self.body:
            root.append(etree.fromstring(self.body, parser=_PARSER))
        return etree.tostring(root, encoding="UTF-8", xml_declaration=False)


@dataclass(frozen=True)
class WireResponse:
    code: ResultCode
    body: bytes = b""

    def body_element(self):
        if not self.body:
            return None
        return etree.fromstring(self.body, parser=_PARSER)


def _malformed(detail: str) -> ResultCode:
    return result_code(codes.XML_MALFORMED, f"XML formatting failure: {detail}")


def encode_request(
    service: ServiceKind,
    payload: bytes,
    *,
    version: str = DEFAULT_VERSION,
    uf: str = "",
    certificate_ref: str = "",
) -> ServiceEnvelope:
    if payload:
        try:
            etree.fromstring(payload, parser=_PARSER)
        except etree.XMLSyntaxError as exc:
            raise EnvelopeError(_malformed(str(exc))) from exc
    return ServiceEnvelope(
        service=ServiceKind(service),
        version=version,
        uf=uf,
        certificate_ref=certificate_ref,
        body=payload,
    )


def decode_request(data: bytes, supported_versions=SUPPORTED_VERSIONS) -> ServiceEnvelope:
    """Parse and validate an envelope; E2/E3 failures raise EnvelopeError."""
    try:
        root = etree.fromstring(data, parser=_PARSER)
    except (etree.XMLSyntaxError, ValueError) as exc:
        raise EnvelopeError(_malformed(str(exc))) from exc
    if root.tag != "cteRequest":
        raise EnvelopeError(_malformed(f"unexpected root <{root.tag}>"))
    try:
        service = ServiceKind(root.get("service", ""))
    except ValueError as exc:
        raise EnvelopeError(_malformed(f"unknown service {root.get('service')!r}")) from exc

    version = root.get("version") or ""
    if version not in supported_versions:
        raise EnvelopeError(result_code(codes.UNSUPPORTED_VERSION, f"Unsupported version {version!r}"))
    uf = root.get("uf") or ""
    if not is_valid_uf_code(uf):
        raise EnvelopeError(result_code(codes.INVALID_UF, f"Invalid or absent federation unit {uf!r}"))

    children = [child for child in root if isinstance(child.tag, str)]
    if len(children) > 1:
        raise EnvelopeError(_malformed("envelope carries more than one body element"))
    body = etree.tostring(children[0], encoding="UTF-8", with_tail=False) if children else b""
    return ServiceEnvelope(
        service=service,
        version=version,
        uf=uf,
        certificate_ref=root.get("certRef") or "",
        body=body,
    )


def encode_response(result: ResultCode | int, body=None) -> bytes:
    if not isinstance(result, ResultCode):
        result = result_code(result)
    root = etree.Element("cteResponse")
    root.set("code", str(result.code))
    root.set("message", result.message)
    if body is not None:
        if isinstance(body, bytes):
            body = etree.fromstring(body, parser=_PARSER)
        root.append(body)
    return etree.tostring(root, encoding="UTF-8", xml_declaration=False)


def decode_response(data: bytes) -> WireResponse:
    """Total: anything unreadable becomes an E2 result."""
    try:
        root = etree.fromstring(data, parser=_PARSER)
    except (etree.XMLSyntaxError, ValueError, TypeError) as exc:
        return WireResponse(_malformed(str(exc) or "empty response"))
    if root.tag != "cteResponse":
        return WireResponse(_malformed(f"unexpected root <{root.tag}>"))
    code_text = root.get("code") or ""
    if not (code_text.isascii() and code_text.isdigit()):
        return WireResponse(_malformed(f"response code {code_text!r} is not numeric"))
    code = int(code_text)
    result = result_code(code, root.get("message") if code in codes.RESULT_CODES else None)
    children = [child for child in root if isinstance(child.tag, str)]
    body = etree.tostring(children[0], encoding="UTF-8", with_tail=False) if children else b""
    return WireResponse(code=result, body=body)
