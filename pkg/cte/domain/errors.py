"""Exception hierarchy shared by every CT-e module."""

from __future__ import annotations


class CteError(Exception):
    code: int | None = None
    message = "CT-e error"

    def __init__(self, message: str = "", code: int | None = None):
        if message:
            self.message = message
        if code is not None:
            self.code = code
        super().__init__(self.message)

    def __str__(self):
        if self.code is None:
            return self.message
        return f"[{self.code}] {self.message}"


class FieldWidthError(CteError):
    message = "Field has the wrong width"


class CertificateError(CteError):
    """E1: the certificate cannot sign or authorise the request."""

    code = 280
    message = "Invalid certificate"


class IllegalTransition(CteError):
    code = 406

    def __init__(self, current, event):
        self.current = current
        self.event = event
        super().__init__(f"Illegal lifecycle transition: {current} on {event}")


class OversizedDocument(CteError):
    code = 214

    def __init__(self, document, size: int):
        self.document = document
        self.size = size
        super().__init__(f"Document {document.access_key} alone serializes to {size} bytes")


class EnvelopeError(CteError):
    """Request rejected before reaching a service handler."""

    def __init__(self, result):
        self.result = result
        super().__init__(result.message, result.code)


class TransportError(CteError):
    message = "Authority unreachable"


class JournalCorruption(CteError):
    def __init__(self, seq: int, reason: str):
        self.seq = seq
        self.reason = reason
        super().__init__(f"Journal corrupted at seq {seq}: {reason}")


class ConfigError(CteError):
    message = "Invalid gateway configuration"


class DacteRefused(CteError):
    code = 406
    message = "DACTE can only be printed for approved documents"


class UnknownDocument(CteError):
    code = 405
    message = "Unknown access key"
