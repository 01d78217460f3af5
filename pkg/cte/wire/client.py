"""Typed facade over a transport, one method per authority service."""

from __future__ import annotations

import logging

from .bodies import (
    BatchStatus,
    NumberingRange,
    Receipt,
    ServiceStatus,
    correction_body,
    service_status_request,
    track_batch_body,
    track_status_body,
    withdraw_body,
    withdraw_numbering_body,
)
from .codes import ResultCode, result_code
from . import codes
from .envelope import DEFAULT_VERSION, ServiceKind, WireResponse, decode_response, encode_request
from .transport import Transport

logger = logging.getLogger(__name__)


class AuthorityClient:
    def __init__(self, transport: Transport, *, certificate_ref: str, uf: str, version: str = DEFAULT_VERSION):
        self.transport = transport
        self.certificate_ref = certificate_ref
        self.uf = uf
        self.version = version

    def call(self, service: ServiceKind, payload: bytes) -> WireResponse:
        envelope = encode_request(
            service,
            payload,
            version=self.version,
            uf=self.uf,
            certificate_ref=self.certificate_ref,
        )
        response = decode_response(self.transport.send(service, envelope.to_bytes()))
        logger.debug("%s -> %s", service, response.code)
        return response

    def send_batch(self, batch_bytes: bytes) -> tuple[ResultCode, Receipt | None]:
        response = self.call(ServiceKind.SEND_BATCH, batch_bytes)
        if response.code.code != codes.BATCH_RECEIVED:
            return response.code, None
        try:
            return response.code, Receipt.from_body(response.body)
        except ValueError as exc:
            return result_code(codes.XML_MALFORMED, f"XML formatting failure: {exc}"), None

    def track_batch(self, receipt: str) -> tuple[ResultCode, BatchStatus | None]:
        response = self.call(ServiceKind.TRACK_BATCH, track_batch_body(receipt))
        if response.code.code not in (codes.BATCH_PROCESSED, codes.BATCH_IN_PROCESSING):
            return response.code, None
        try:
            return response.code, BatchStatus.from_body(response.body)
        except ValueError as exc:
            return result_code(codes.XML_MALFORMED, f"XML formatting failure: {exc}"), None

    def withdraw(self, access_key: str, reason: str) -> ResultCode:
        return self.call(ServiceKind.WITHDRAW_CTE, withdraw_body(access_key, reason)).code

    def withdraw_numbering(self, numbering: NumberingRange, reason: str) -> ResultCode:
        return self.call(ServiceKind.WITHDRAW_NUMBERING, withdraw_numbering_body(numbering, reason)).code

    def track_cte_status(self, access_key: str) -> ResultCode:
        return self.call(ServiceKind.TRACK_CTE_STATUS, track_status_body(access_key)).code

    def correct(self, access_key: str, text: str) -> ResultCode:
        return self.call(ServiceKind.CORRECT_CTE, correction_body(access_key, text)).code

    def service_status(self) -> tuple[ResultCode, ServiceStatus | None]:
        response = self.call(ServiceKind.TRACK_SERVICE_STATUS, service_status_request())
        if not response.body:
            return response.code, None
        return response.code, ServiceStatus.from_response(response.code, response.body)
