"""Core CT-e model: identifiers, documents, signatures and lifecycle."""

from .access_key import AccessKey, compute_access_key, parse_access_key, verify_access_key
from .cnpj import Cnpj, make_cnpj, validate_cnpj
from .document import CTeDocument, Modal, canonical_serialize, parse_document
from .lifecycle import LifecycleEvent, LifecycleStatus, transition
from .signing import Certificate, Signature, sign, verify

__all__ = [
    "AccessKey",
    "CTeDocument",
    "Certificate",
    "Cnpj",
    "LifecycleEvent",
    "LifecycleStatus",
    "Modal",
    "Signature",
    "canonical_serialize",
    "compute_access_key",
    "make_cnpj",
    "parse_access_key",
    "parse_document",
    "sign",
    "transition",
    "validate_cnpj",
    "verify",
    "verify_access_key",
]
