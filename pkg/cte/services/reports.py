from __future__ import annotations

from datetime import date, datetime, timedelta, timezone

from cte.domain.document import format_instant
from cte.domain.errors import UnknownDocument
from cte.domain.lifecycle import LifecycleStatus
from cte.store.journal import HEADER
from cte.store.store import Store


def document_status(store: Store, access_key: str) -> dict:
    """Current status, last result and full transition history of one document."""
    matches = store.query(access_key=access_key)
    if not matches:
        raise UnknownDocument(f"Unknown access key {access_key}")
    record = matches[0]
    return {
        "access_key": record.key,
        "status": record.status.value,
        "code": record.last_code if record.last_code is not None else _code_for(record.status),
        "message": record.last_message,
        "reason": record.reason,
        "receipt": record.receipt,
        "batch_id": record.batch_id,
        "source": f"{record.source_file}:{record.line_no}" if record.source_file else "",
        "corrections": list(record.corrections),
        "history": [step.to_dict() for step in record.history],
    }


def _code_for(status: LifecycleStatus) -> int | None:
    if status is LifecycleStatus.TRANSMITTED:
        return 103
    if status is LifecycleStatus.PROCESSING:
        return 105
    return None


def format_status(report: dict) -> list[str]:
    code = f" ({report['code']})" if report["code"] is not None else ""
    lines = [f"{report['status']}{code}"]
    if report["message"]:
        lines.append(f"Message: {report['message']}")
    if report["reason"]:
        lines.append(f"Reason: {report['reason']}")
    if report["receipt"]:
        lines.append(f"Receipt: {report['receipt']}")
    for note in report["corrections"]:
        lines.append(f"Correction: {note}")
    lines.append("History:")
    for step in report["history"]:
        source = step["from"] or "-"
        code = f" [{step['code']}]" if step["code"] is not None else ""
        lines.append(f"  {step['at']}  {source} -> {step['to']}  {step['event']}{code}")
    return lines


def validation_errors(store: Store, since: datetime | None = None) -> list[dict]:
    """Parse errors, rejected documents and anomalies, oldest first."""
    state = store.state
    rows = []
    for error in state.ingest_errors:
        rows.append(
            {
                "at": error["at"],
                "kind": "ingest",
                "ref": f"{error.get('file', '')}:{error.get('line_no', 0)}",
                "code": None,
                "message": f"{error['stage']}: {error['message']}",
            }
        )
    for record in state.documents.values():
        if record.status is LifecycleStatus.REJECTED:
            rows.append(
                {
                    "at": format_instant(record.history[-1].at),
                    "kind": "rejected",
                    "ref": record.key,
                    "code": record.last_code,
                    "message": record.last_message,
                }
            )
    for anomaly in state.anomalies:
        rows.append(
            {
                "at": format_instant(anomaly.at),
                "kind": "anomaly",
                "ref": anomaly.ref,
                "code": None,
                "message": anomaly.message,
            }
        )
    if since is not None:
        threshold = format_instant(since)
        rows = [row for row in rows if row["at"] >= threshold]
    rows.sort(key=lambda row: (row["at"], row["kind"], row["ref"]))
    return rows


def daily_counts(store: Store, since: datetime | None = None, until: datetime | None = None) -> list[dict]:
    """
    Issued, approved, rejected and cancelled documents per issue date (UTC).

    A document counts as approved once the authority approved it, even if it
    was cancelled afterwards. When both bounds are given every day in the
    range is listed, filling days without documents with zeros.
    """
    by_day: dict[date, dict] = {}

    def row(day: date) -> dict:
        return by_day.setdefault(
            day, {"date": day.isoformat(), "issued": 0, "approved": 0, "rejected": 0, "cancelled": 0}
        )

    if since is not None and until is not None:
        day = since.astimezone(timezone.utc).date()
        while datetime.combine(day, datetime.min.time(), tzinfo=timezone.utc) < until:
            row(day)
            day += timedelta(days=1)

    for record in store.query(since=since, until=until):
        counts = row(record.document.issue_instant.astimezone(timezone.utc).date())
        counts["issued"] += 1
        if record.approved_at is not None:
            counts["approved"] += 1
        if record.status is LifecycleStatus.REJECTED:
            counts["rejected"] += 1
        elif record.status is LifecycleStatus.CANCELLED:
            counts["cancelled"] += 1
    return [by_day[day] for day in sorted(by_day)]


def totals(rows: list[dict]) -> dict:
    summary = {"date": "total", "issued": 0, "approved": 0, "rejected": 0, "cancelled": 0}
    for counts in rows:
        for name in ("issued", "approved", "rejected", "cancelled"):
            summary[name] += counts[name]
    return summary


def _month_start(moment: datetime) -> datetime:
    return moment.astimezone(timezone.utc).replace(day=1, hour=0, minute=0, second=0, microsecond=0)


def _next_month(start: datetime) -> datetime:
    return (start + timedelta(days=32)).replace(day=1)


def monthly_storage(store: Store) -> list[dict]:
    """Documents (by issue instant), journal events and journal bytes per calendar month (UTC)."""
    usage: dict[datetime, dict] = {}

    def month(moment: datetime) -> dict:
        return usage.setdefault(_month_start(moment), {"events": 0, "journal_bytes": 0})

    for event in store.events():
        entry = month(event.at)
        entry["events"] += 1
        entry["journal_bytes"] += HEADER.size + len(event.encode())
    for record in store.query():
        month(record.document.issue_instant)

    rows = []
    for start in sorted(usage):
        documents = store.query(since=start, until=_next_month(start))
        active_days = {record.document.issue_instant.astimezone(timezone.utc).date() for record in documents}
        rows.append(
            {
                "month": start.strftime("%Y-%m"),
                "active_days": len(active_days),
                "documents": len(documents),
                **usage[start],
            }
        )
    return rows


def storage_projection(rows: list[dict], *, working_days_per_month: int, months: int) -> dict:
    """Scale the measured per-day averages linearly to a month and to `months` months."""
    days = sum(row["active_days"] for row in rows)
    projection = {}
    measured = {
        "per_month": "documents",
        "events_per_month": "events",
        "journal_bytes_per_month": "journal_bytes",
    }
    for total_name, name in measured.items():
        count = sum(row[name] for row in rows)
        projection[total_name] = round(count / days * working_days_per_month) if days else 0
    projection["five_years"] = projection["per_month"] * months
    projection["five_years_events"] = projection["events_per_month"] * months
    projection["five_years_journal_bytes"] = projection["journal_bytes_per_month"] * months
    projection["months"] = rows
    return projection
