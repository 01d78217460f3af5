"""Keyed-digest signatures standing in for ICP-Brasil certificates.

A signature is HMAC-SHA256 over the canonical, unsigned document bytes,
keyed by the certificate secret. The authority holds the same secret in its
certificate registry, so every E1 branch (invalid, overdue, revoked,
prerequisites, CNPJ) can be exercised without PKI.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass
from datetime import datetime

from .errors import CertificateError

INVALID_CERTIFICATE = 280
OVERDUE_CERTIFICATE = 281
REVOKED_CERTIFICATE = 282
PREREQUISITES_VIOLATION = 283
CNPJ_MISMATCH = 284


@dataclass(frozen=True)
class Certificate:
    subject_cnpj: str
    not_before: datetime
    not_after: datetime
    key_id: bytes
    secret: bytes
    revoked: bool = False

    def __post_init__(self):
        if not self.not_before < self.not_after:
            raise ValueError("Certificate window must satisfy not_before < not_after")

    @property
    def key_ref(self) -> str:
        return self.key_id.hex()

    def to_dict(self) -> dict:
        return {
            "subject_cnpj": self.subject_cnpj,
            "not_before": self.not_before.isoformat(),
            "not_after": self.not_after.isoformat(),
            "key_id": self.key_id.hex(),
            "secret": self.secret.hex(),
            "revoked": self.revoked,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Certificate":
        return cls(
            subject_cnpj=str(data["subject_cnpj"]),
            not_before=datetime.fromisoformat(data["not_before"]),
            not_after=datetime.fromisoformat(data["not_after"]),
            key_id=bytes.fromhex(data["key_id"]),
            secret=bytes.fromhex(data["secret"]),
            revoked=bool(data.get("revoked", False)),
        )


@dataclass(frozen=True)
class Signature:
    key_id: bytes
    digest: bytes


def check_certificate(cert: Certificate | None, cnpj: str, now: datetime) -> None:
    """Raise CertificateError with the E1 code that applies, if any."""
    if cert is None:
        raise CertificateError("Unknown certificate", INVALID_CERTIFICATE)
    if cert.revoked:
        raise CertificateError("Certificate revoked", REVOKED_CERTIFICATE)
    if not cert.not_before <= now <= cert.not_after:
        raise CertificateError("Certificate outside its validity window", OVERDUE_CERTIFICATE)
    if cert.subject_cnpj != cnpj:
        raise CertificateError(
            f"Certificate subject {cert.subject_cnpj} does not match CNPJ {cnpj}",
            CNPJ_MISMATCH,
        )


def digest_bytes(payload: bytes, secret: bytes) -> bytes:
    return hmac.new(secret, payload, hashlib.sha256).digest()


def sign(doc, cert: Certificate, now: datetime) -> Signature:
    # Local import: document imports signing for the Signature type.
    from .document import canonical_serialize

    check_certificate(cert, doc.establishment, now)
    payload = canonical_serialize(doc, include_signature=False)
    return Signature(key_id=cert.key_id, digest=digest_bytes(payload, cert.secret))


def verify(doc, signature: Signature | None, cert: Certificate) -> bool:
    from .document import canonical_serialize

    if signature is None or signature.key_id != cert.key_id:
        return False
    payload = canonical_serialize(doc, include_signature=False)
    return hmac.compare_digest(digest_bytes(payload, cert.secret), signature.digest)
