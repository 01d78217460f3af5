"""Result-code table shared by the authority and the gateway."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Category(str, Enum):
    SUCCESS = "Success"
    E1_CERTIFICATE = "E1_Certificate"
    E2_XML = "E2_Xml"
    E3_CONNECTION = "E3_Connection"
    E4_SEMANTIC = "E4_Semantic"

    def __str__(self):
        return self.value


DOCUMENT_APPROVED = 100
CANCELLATION_APPROVED = 101
NUMBERING_CANCELLATION_APPROVED = 102
BATCH_RECEIVED = 103
BATCH_PROCESSED = 104
BATCH_IN_PROCESSING = 105
SERVICE_IN_OPERATION = 107
SERVICE_PARALYSED = 108
CORRECTION_REGISTERED = 134
DUPLICATE_ACCESS_KEY = 204
BATCH_TOO_LARGE = 214
BATCH_TOO_MANY_DOCUMENTS = 216
MIXED_ESTABLISHMENTS = 217
XML_MALFORMED = 225
UNSUPPORTED_VERSION = 239
INVALID_CERTIFICATE = 280
OVERDUE_CERTIFICATE = 281
REVOKED_CERTIFICATE = 282
CERTIFICATE_PREREQUISITES = 283
CERTIFICATE_CNPJ_MISMATCH = 284
INVALID_SIGNATURE = 297
INVALID_ACCESS_KEY = 298
NOT_FOUND = 405
ILLEGAL_STATE = 406
INVALID_UF = 509
INTERNAL_ERROR = 999

C = Category

RESULT_CODES: dict[int, tuple[Category, str]] = {
    DOCUMENT_APPROVED: (C.SUCCESS, "Document approved"),
    CANCELLATION_APPROVED: (C.SUCCESS, "Cancellation approved"),
    NUMBERING_CANCELLATION_APPROVED: (C.SUCCESS, "Numbering cancellation approved"),
    BATCH_RECEIVED: (C.SUCCESS, "Batch received"),
    BATCH_PROCESSED: (C.SUCCESS, "Batch processed"),
    BATCH_IN_PROCESSING: (C.SUCCESS, "Batch in processing"),
    SERVICE_IN_OPERATION: (C.SUCCESS, "Service in operation"),
    SERVICE_PARALYSED: (C.E2_XML, "Service paralysed"),
    CORRECTION_REGISTERED: (C.SUCCESS, "Correction registered"),
    DUPLICATE_ACCESS_KEY: (C.E4_SEMANTIC, "Duplicate access key"),
    BATCH_TOO_LARGE: (C.E2_XML, "Batch exceeds 500 KB"),
    BATCH_TOO_MANY_DOCUMENTS: (C.E2_XML, "Batch exceeds 50 documents"),
    MIXED_ESTABLISHMENTS: (C.E2_XML, "Batch mixes establishments"),
    XML_MALFORMED: (C.E2_XML, "XML formatting failure"),
    UNSUPPORTED_VERSION: (C.E3_CONNECTION, "Unsupported version"),
    INVALID_CERTIFICATE: (C.E1_CERTIFICATE, "Invalid certificate"),
    OVERDUE_CERTIFICATE: (C.E1_CERTIFICATE, "Overdue certificate"),
    REVOKED_CERTIFICATE: (C.E1_CERTIFICATE, "Revoked certificate"),
    CERTIFICATE_PREREQUISITES: (C.E1_CERTIFICATE, "Certificate prerequisites violation"),
    CERTIFICATE_CNPJ_MISMATCH: (C.E1_CERTIFICATE, "Certificate CNPJ mismatch"),
    INVALID_SIGNATURE: (C.E4_SEMANTIC, "Document signature does not verify"),
    INVALID_ACCESS_KEY: (C.E4_SEMANTIC, "Invalid access key"),
    NOT_FOUND: (C.E4_SEMANTIC, "Not found"),
    ILLEGAL_STATE: (C.E4_SEMANTIC, "Illegal lifecycle state for request"),
    INVALID_UF: (C.E3_CONNECTION, "Invalid or absent federation unit"),
    INTERNAL_ERROR: (C.E4_SEMANTIC, "Internal error"),
}

del C


@dataclass(frozen=True)
class ResultCode:
    code: int
    category: Category
    message: str

    @property
    def is_success(self) -> bool:
        return self.category is Category.SUCCESS

    def __str__(self):
        return f"{self.code} {self.message}"


def result_code(code: int, message: str | None = None) -> ResultCode:
    try:
        category, default_message = RESULT_CODES[int(code)]
    except (KeyError, TypeError, ValueError):
        return ResultCode(code=_as_int(code), category=Category.E4_SEMANTIC, message=f"unknown code {code}")
    return ResultCode(code=int(code), category=category, message=message or default_message)


def _as_int(code) -> int:
    try:
        return int(code)
    except (TypeError, ValueError):
        return INTERNAL_ERROR
