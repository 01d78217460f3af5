"""Shared builders for the CT-e test suites."""

from __future__ import annotations

import hashlib
from dataclasses import replace
from datetime import datetime, timedelta, timezone
from pathlib import Path

from cte.authority.service import Authority, CertificateRegistry
from cte.clock import VirtualClock
from cte.domain.access_key import compute_access_key
from cte.domain.cnpj import make_cnpj
from cte.domain.document import CTeDocument, Modal, format_instant
from cte.domain.signing import Certificate, sign
from cte.gateway.config import GatewayConfig
from cte.gateway.orchestrator import Gateway
from cte.gateway.outbox import Outbox
from cte.store.store import Store
from cte.wire.client import AuthorityClient
from cte.wire.transport import InProcessTransport

UTC = timezone.utc
NOW = datetime(2024, 3, 5, 12, 0, tzinfo=UTC)
UF = "35"
ISSUER = make_cnpj("112223330001").digits
OTHER_ISSUER = make_cnpj("445556660001").digits
TICK = timedelta(seconds=60)
REASON = "Shipment called off by the customer"


def certificate(cnpj: str = ISSUER, *, name: str = "main", **overrides) -> Certificate:
    values = {
        "subject_cnpj": cnpj,
        "not_before": NOW - timedelta(days=365),
        "not_after": NOW + timedelta(days=365),
        "key_id": hashlib.sha256(f"key-{name}-{cnpj}".encode("ascii")).digest()[:16],
        "secret": hashlib.sha256(f"secret-{name}-{cnpj}".encode("ascii")).digest(),
    }
    values.update(overrides)
    return Certificate(**values)


def draft(
    number: int = 1,
    *,
    issuer: str = ISSUER,
    series: str = "001",
    issued: datetime = NOW,
    seed: str = "12345678",
    cargo: str = "Steel coils",
) -> CTeDocument:
    digits = f"{number:09d}"
    key = compute_access_key(
        uf_code=UF,
        issue_instant=issued,
        issuer=issuer,
        series=series,
        number=digits,
        random_seed=seed,
    )
    return CTeDocument(
        access_key=key,
        establishment=issuer,
        series=series,
        number=digits,
        issue_instant=issued,
        modal=Modal.HIGHWAY,
        origin_uf="SP",
        dest_uf="RJ",
        freight_value=150_000,
        cargo_description=cargo,
    )


def signed(doc: CTeDocument, cert: Certificate, now: datetime = NOW) -> CTeDocument:
    return replace(doc, signature=sign(doc, cert, now))


def make_authority(*certs: Certificate, clock=None, **kwargs) -> Authority:
    return Authority(certificates=CertificateRegistry(certs), clock=clock or VirtualClock(NOW), **kwargs)


def make_client(authority: Authority, cert: Certificate, **kwargs) -> tuple[AuthorityClient, InProcessTransport]:
    transport = InProcessTransport(lambda service, request: authority.handle(service, request))
    return AuthorityClient(transport, certificate_ref=cert.key_ref, uf=UF, **kwargs), transport


def issue_line(number: int, *, issuer: str = ISSUER, issued: datetime = NOW, cargo: str = "Steel coils") -> str:
    return "|".join(
        ["CTE", issuer, "001", f"{number:09d}", format_instant(issued), "SP", "RJ", "highway", "150000", cargo]
    )


def write_in_file(in_dir: Path, name: str, lines: list[str]) -> Path:
    in_dir.mkdir(parents=True, exist_ok=True)
    path = in_dir / name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _out_order(name: str):
    # RESULT-<seq>.txt and ERR-<seq>.txt in journal order
    kind, _, rest = name.partition("-")
    ident = rest.split(".", 1)[0]
    return (kind, int(ident) if ident.isdigit() else 0, name)


class GatewayHarness:
    """A gateway wired to an in-process authority on one virtual clock."""

    def __init__(self, root: Path, *, cert: Certificate | None = None, authority: Authority | None = None, journal=None):
        self.root = Path(root)
        self.cert = cert or certificate()
        self.clock = VirtualClock(NOW)
        self.authority = authority or make_authority(self.cert, clock=self.clock)
        self.client, self.transport = make_client(self.authority, self.cert)
        self.config = GatewayConfig(
            in_dir=self.root / "IN",
            out_dir=self.root / "OUT",
            certificate=self.cert,
            uf=UF,
            journal_fsync=False,
        )
        self.config.in_dir.mkdir(parents=True, exist_ok=True)
        self.journal = journal
        self.gateway = self.restart()

    def restart(self) -> Gateway:
        store = Store(self.journal) if self.journal is not None else Store.open(None)
        self.journal = store.journal
        outbox = Outbox(self.config.out_dir)
        self.gateway = Gateway(self.config, store, self.client, clock=self.clock, outbox=outbox)
        return self.gateway

    @property
    def state(self):
        return self.gateway.store.state

    def drop(self, name: str, lines: list[str]) -> Path:
        return write_in_file(self.config.in_dir, name, lines)

    def tick(self):
        now = self.clock.now()
        report = self.gateway.tick(now)
        self.authority.pump(now)
        self.clock.advance(TICK)
        return report

    def out_files(self, prefix: str = "") -> list[str]:
        if not self.config.out_dir.exists():
            return []
        names = [path.name for path in self.config.out_dir.iterdir() if path.name.startswith(prefix)]
        return sorted(names, key=_out_order)

    def out_lines(self, prefix: str = "RESULT") -> list[str]:
        return [
            (self.config.out_dir / name).read_text(encoding="utf-8").strip()
            for name in self.out_files(prefix)
        ]
