"""Transports carrying envelope bytes to an authority and back."""

from __future__ import annotations

import logging
from typing import Callable, Protocol

import requests

from cte.domain.errors import TransportError

from .envelope import ServiceKind

logger = logging.getLogger(__name__)


class Transport(Protocol):
    def send(self, service: ServiceKind, request: bytes) -> bytes: ...


class InProcessTransport:
    """Calls an authority handle directly; same bytes as over HTTP.

    `handler` takes (service, request bytes) and returns response bytes.
    Setting `down` makes every call fail like an unreachable endpoint.
    """

    def __init__(self, handler: Callable[[ServiceKind, bytes], bytes]):
        self.handler = handler
        self.down = False
        self.calls = 0

    def send(self, service: ServiceKind, request: bytes) -> bytes:
        self.calls += 1
        if self.down:
            raise TransportError(f"{service} endpoint is down")
        return self.handler(service, request)


class HttpTransport:
    def __init__(self, endpoint: str, timeout: float = 30.0, session: requests.Session | None = None):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()

    def url_for(self, service: ServiceKind) -> str:
        return f"{self.endpoint}{service.path}"

    def send(self, service: ServiceKind, request: bytes) -> bytes:
        url = self.url_for(service)
        try:
            response = self.session.post(
                url,
                data=request,
                headers={"Content-Type": "application/xml; charset=utf-8"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            logger.warning("POST %s failed: %s", url, exc)
            raise TransportError(f"POST {url} failed: {exc}") from exc
        if response.status_code >= 500:
            raise TransportError(f"POST {url} answered HTTP {response.status_code}")
        return response.content
