"""Seeded end-to-end runs: TMS traffic -> gateway -> in-process authority, on a virtual clock.

Everything that reaches the journal or the report is derived from the seed and
the virtual clock, so two runs with the same parameters produce identical
reports and identical journal bytes.
"""

from __future__ import annotations

import hashlib
import logging
import math
import random
import tempfile
from collections import Counter
from dataclasses import asdict, dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

from cte.authority.service import Authority, CertificateRegistry, Environment
from cte.clock import VirtualClock
from cte.domain.cnpj import make_cnpj
from cte.domain.document import Modal, format_instant
from cte.domain.lifecycle import LifecycleStatus, is_legal_path
from cte.domain.signing import Certificate
from cte.domain.uf import UF_CODES
from cte.gateway.config import GatewayConfig
from cte.gateway.orchestrator import Gateway
from cte.gateway.outbox import Outbox
from cte.store.store import Store
from cte.wire.client import AuthorityClient
from cte.wire.codes import Category, result_code
from cte.wire.transport import InProcessTransport

from .reports import daily_counts, monthly_storage, storage_projection, totals

logger = logging.getLogger(__name__)

START = datetime(2024, 1, 1, tzinfo=timezone.utc)
BUSINESS_HOURS_START = timedelta(hours=8)
AUTHORITY_UF = "35"
ESTABLISHMENT = make_cnpj("112223330001").digits
SERIES = "001"
CANCEL_REASON = "Freight contract cancelled by the shipper"
SETTLE_TICKS = 30
WORKING_DAYS_PER_MONTH = 20
MONTHS_IN_FIVE_YEARS = 60

CARGO = (
    "Packaged food products",
    "Auto parts on pallets",
    "Steel coils",
    "Pharmaceuticals, temperature controlled",
    "Household appliances",
    "Paper reels",
    "Agricultural machinery parts",
    "Textiles in bales",
)


@dataclass(frozen=True)
class SimulationParams:
    days: int = 1
    docs_per_day: int = 1000
    fault_rate: float = 0.0
    cancel_rate: float = 0.0
    seed: int = 0
    files_per_day: int = 1
    delay_ms: int = 0
    tick_seconds: int = 60

    def __post_init__(self):
        if self.days < 1 or self.docs_per_day < 0:
            raise ValueError("days must be >= 1 and docs_per_day >= 0")
        if not (0.0 <= self.fault_rate <= 1.0 and 0.0 <= self.cancel_rate <= 1.0):
            raise ValueError("fault_rate and cancel_rate must lie in [0, 1]")
        if self.files_per_day < 1 or self.tick_seconds < 1 or self.delay_ms < 0:
            raise ValueError("files_per_day and tick_seconds must be positive, delay_ms non-negative")


def simulation_certificate(seed: int) -> Certificate:
    return Certificate(
        subject_cnpj=ESTABLISHMENT,
        not_before=START - timedelta(days=1),
        not_after=START + timedelta(days=3650),
        key_id=hashlib.sha256(f"cte-sim-key-{seed}".encode("ascii")).digest()[:16],
        secret=hashlib.sha256(f"cte-sim-secret-{seed}".encode("ascii")).digest(),
    )


def mistype_cnpj(cnpj: str) -> str:
    """Same length, broken second check digit: what a slipped keystroke produces."""
    return cnpj[:13] + str((int(cnpj[13]) + 1) % 10)


def split_evenly(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if index < extra else 0) for index in range(parts)]


class Simulation:
    def __init__(self, params: SimulationParams, work_dir: Path, *, journal_path: Path | None = None, out_dir: Path | None = None):
        self.params = params
        self.clock = VirtualClock(START)
        self.interval = timedelta(seconds=params.tick_seconds)
        self.rng = random.Random(params.seed)
        certificate = simulation_certificate(params.seed)

        self.authority = Authority(
            environment=Environment.APPROVAL,
            uf=AUTHORITY_UF,
            delay=timedelta(milliseconds=params.delay_ms),
            certificates=CertificateRegistry([certificate]),
            clock=self.clock,
        )
        self.transport = InProcessTransport(lambda service, request: self.authority.handle(service, request))
        client = AuthorityClient(self.transport, certificate_ref=certificate.key_ref, uf=AUTHORITY_UF)

        self.in_dir = Path(work_dir) / "in"
        self.in_dir.mkdir(parents=True, exist_ok=True)
        config = GatewayConfig(
            in_dir=self.in_dir,
            out_dir=Path(out_dir) if out_dir is not None else Path(work_dir) / "out",
            certificate=certificate,
            uf=AUTHORITY_UF,
            tick_interval=self.interval,
            environment=Environment.APPROVAL,
            journal_path=journal_path,
            journal_fsync=False,
        )
        self.store = Store.open(journal_path, fsync=False)
        self.outbox = Outbox(out_dir, approval=True)
        self.gateway = Gateway(config, self.store, client, clock=self.clock, outbox=self.outbox)

        self.faulted: set[tuple[str, int]] = set()
        self.next_number = 1
        self.issue_line_count = 0
        self.cancel_line_count = 0
        self.ticks = 0
        self.failed_stages: list[str] = []

    # Traffic

    def _drop(self, name: str, lines: list[str]) -> None:
        (self.in_dir / name).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def _issue_lines(self, name: str, count: int, issued_at: datetime) -> list[str]:
        ufs = sorted(UF_CODES)
        modals = [modal.value for modal in Modal]
        lines = []
        for line_no in range(1, count + 1):
            cnpj = ESTABLISHMENT
            if self.rng.random() < self.params.fault_rate:
                cnpj = mistype_cnpj(ESTABLISHMENT)
                self.faulted.add((name, line_no))
            fields = [
                "CTE",
                cnpj,
                SERIES,
                f"{self.next_number:09d}",
                format_instant(issued_at),
                self.rng.choice(ufs),
                self.rng.choice(ufs),
                self.rng.choice(modals),
                str(self.rng.randint(5_000, 2_500_000)),
                self.rng.choice(CARGO),
            ]
            self.next_number += 1
            lines.append("|".join(fields))
        self.issue_line_count += count
        return lines

    # Clock

    def tick(self) -> None:
        now = self.clock.now()
        report = self.gateway.tick(now)
        self.authority.pump(now)
        self.authority.purge_output(now)
        self.failed_stages.extend(report.failed_stages)
        self.ticks += 1
        self.clock.advance(self.interval)

    def settled(self) -> bool:
        state = self.store.state
        return not (
            state.open_requests
            or state.unresolved_batches
            or state.unconfirmed
            or self.authority.queue_depth
            or any(self.in_dir.glob("*.txt"))
        )

    def settle(self) -> None:
        delay_ticks = math.ceil(self.params.delay_ms / 1000 / self.params.tick_seconds)
        for _ in range(SETTLE_TICKS + delay_ticks):
            if self.settled():
                return
            self.tick()
        logger.warning("Simulation did not settle within %d ticks", SETTLE_TICKS + delay_ticks)

    def run_day(self, day: int) -> None:
        self.clock.set(max(self.clock.now(), START + timedelta(days=day) + BUSINESS_HOURS_START))
        prefix = f"day{day + 1:03d}"
        for index, size in enumerate(split_evenly(self.params.docs_per_day, self.params.files_per_day), start=1):
            if size:
                name = f"{prefix}-{index:02d}.txt"
                self._drop(name, self._issue_lines(name, size, self.clock.now()))
            self.tick()
        self.settle()

        if self.params.cancel_rate:
            approved = [
                record.key
                for record in self.store.state.documents.values()
                if record.source_file.startswith(prefix) and record.status is LifecycleStatus.APPROVED
            ]
            chosen = [key for key in approved if self.rng.random() < self.params.cancel_rate]
            if chosen:
                self._drop(f"{prefix}-cancel.txt", [f"CANCEL|{key}|{CANCEL_REASON}" for key in chosen])
                self.cancel_line_count += len(chosen)
                self.tick()
                self.settle()

    def run(self) -> dict:
        for day in range(self.params.days):
            self.run_day(day)
            logger.info("Simulated day %d of %d", day + 1, self.params.days)
        return self.report()

    # Verification

    def latencies(self) -> list[int]:
        return [
            int((record.approved_at - record.upserted_at).total_seconds())
            for record in self.store.state.documents.values()
            if record.approved_at is not None
        ]

    def check_invariants(self) -> list[str]:
        state = self.store.state
        violations = []

        issue_results = [out.line.split("|")[1] for out in state.outputs if out.flow == "issue"]
        parse_errors = sum(1 for error in state.ingest_errors if error.get("stage") in ("parse", "build"))
        if len(issue_results) + parse_errors != self.issue_line_count:
            violations.append(
                f"conservation: {self.issue_line_count} ISSUE lines in, "
                f"{len(issue_results)} results + {parse_errors} errors out"
            )
        if len(set(issue_results)) != len(issue_results):
            violations.append("conservation: a document produced more than one issue result")

        for record in state.documents.values():
            if (record.source_file, record.line_no) in self.faulted:
                code = result_code(record.last_code) if record.last_code is not None else None
                if record.status is not LifecycleStatus.REJECTED or code is None or code.category is not Category.E1_CERTIFICATE:
                    violations.append(f"faulted document {record.key} ended {record.status} ({record.last_code})")
            elif record.status not in (LifecycleStatus.APPROVED, LifecycleStatus.CANCELLED):
                violations.append(f"document {record.key} ended {record.status} ({record.last_code})")
            if not is_legal_path([step.to_status for step in record.history]):
                violations.append(f"document {record.key} has an illegal status history")
        for record in state.numbering.values():
            if not is_legal_path([step.to_status for step in record.history]):
                violations.append(f"numbering {record.ref} has an illegal status history")

        bound = 2 * self.params.tick_seconds + math.ceil(self.params.delay_ms / 1000)
        latencies = self.latencies()
        if latencies and max(latencies) > bound:
            violations.append(f"latency: {max(latencies)}s exceeds {bound}s")

        approved_ever = sum(1 for record in state.documents.values() if record.approved_at is not None)
        if self.outbox.dacte_count() != approved_ever:
            violations.append(f"DACTE: {self.outbox.dacte_count()} printed for {approved_ever} approvals")

        batched = [key for batch in state.batches.values() for key in batch.keys]
        if len(batched) != len(set(batched)):
            violations.append("a document was dispatched in two batches")

        expected = self.params.days * self.params.docs_per_day
        if len(state.documents) + parse_errors != expected:
            violations.append(f"store holds {len(state.documents)} documents, expected {expected}")

        if Store(self.store.journal).state.to_dict() != state.to_dict():
            violations.append("replaying the journal does not reproduce the live state")

        if self.failed_stages:
            violations.append(f"failed stages: {', '.join(sorted(set(self.failed_stages)))}")
        return violations

    def report(self) -> dict:
        state = self.store.state
        rows = daily_counts(self.store)
        summary = totals(rows)
        latencies = self.latencies()
        histogram = Counter(latency // 60 for latency in latencies)
        violations = self.check_invariants()
        return {
            "params": asdict(self.params),
            "ticks": self.ticks,
            "virtual_end": format_instant(self.clock.now()),
            "counts": {
                "issued": summary["issued"],
                "approved": summary["approved"],
                "rejected": summary["rejected"],
                "cancelled": summary["cancelled"],
                "faulted": len(self.faulted),
                "issue_lines": self.issue_line_count,
                "cancel_lines": self.cancel_line_count,
                "parse_errors": len(state.ingest_errors),
            },
            "daily": rows,
            "batches": len(state.batches),
            "receipts": sum(1 for batch in state.batches.values() if batch.receipt),
            "dacte_files": self.outbox.dacte_count(),
            "out_records": len(state.outputs),
            "anomalies": [{"ref": a.ref, "message": a.message} for a in state.anomalies],
            "latency": {
                "max_seconds": max(latencies, default=0),
                "histogram_minutes": {str(minutes): histogram[minutes] for minutes in sorted(histogram)},
            },
            "storage": storage_projection(
                monthly_storage(self.store), working_days_per_month=WORKING_DAYS_PER_MONTH, months=MONTHS_IN_FIVE_YEARS
            ),
            "authority": {
                "received": self.authority.received_count,
                "processed": self.authority.processed_count,
            },
            "journal": {
                "events": state.last_seq,
                "sha256": hashlib.sha256(self.store.journal.raw_bytes()).hexdigest(),
            },
            "invariants_ok": not violations,
            "violations": violations,
        }


def run_simulation(params: SimulationParams, *, journal_path: Path | None = None, out_dir: Path | None = None) -> dict:
    with tempfile.TemporaryDirectory(prefix="cte-sim-") as work_dir:
        return Simulation(params, Path(work_dir), journal_path=journal_path, out_dir=out_dir).run()
