"""Envelopes, result codes and transports shared by the gateway and the authority."""

from .codes import Category, ResultCode, result_code
from .envelope import ServiceEnvelope, ServiceKind, decode_request, decode_response, encode_request, encode_response

__all__ = [
    "Category",
    "ResultCode",
    "ServiceEnvelope",
    "ServiceKind",
    "decode_request",
    "decode_response",
    "encode_request",
    "encode_response",
    "result_code",
]
