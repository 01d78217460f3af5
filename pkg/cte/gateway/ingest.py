"""TXT drop-file grammar read from the IN directory.

One pipe-delimited record per UTF-8 line:

    CTE|<cnpj>|<series>|<number>|<issue RFC3339>|<origin_uf>|<dest_uf>|<modal>|<value_cents>|<cargo_description>
    CANCEL|<access_key>|<reason>
    CANCELNUM|<cnpj>|<series>|<from>-<to>|<reason>
    CORRECT|<access_key>|<text>
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from cte.domain.access_key import KEY_LENGTH
from cte.domain.cnpj import Cnpj
from cte.domain.document import XML_INVALID_RE, Modal, format_instant, parse_instant
from cte.domain.uf import normalize_uf

logger = logging.getLogger(__name__)

DONE_SUFFIX = ".done"
MAX_NUMBER = 999_999_999


class RecordKind(str, Enum):
    ISSUE = "Issue"
    CANCEL = "Cancel"
    CANCEL_NUMBERING = "CancelNumbering"
    CORRECT = "Correct"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class IngestRecord:
    kind: RecordKind
    payload: dict = field(default_factory=dict)
    source_file: str = ""
    line_no: int = 0


class LineError(ValueError):
    pass


def _digits(name: str, value: str, width: int) -> str:
    if len(value) != width or not (value.isascii() and value.isdigit()):
        raise LineError(f"{name} must have {width} digits, got {value!r}")
    return value


def _cnpj(value: str) -> str:
    digits = _digits("CNPJ", value, 14)
    try:
        return str(Cnpj(digits))
    except ValueError as exc:
        raise LineError(f"CNPJ {digits} has invalid check digits") from exc


def _text(name: str, value: str) -> str:
    if not value.strip():
        raise LineError(f"{name} is empty")
    if XML_INVALID_RE.search(value):
        raise LineError(f"{name} contains control characters")
    return value


def _parse_issue(fields: list[str]) -> dict:
    if len(fields) != 10:
        raise LineError(f"CTE line needs 10 fields, got {len(fields)}")
    _, cnpj, series, number, issued, origin, dest, modal, value, cargo = fields
    try:
        instant = parse_instant(issued)
    except ValueError as exc:
        raise LineError(f"issue instant {issued!r} is not RFC 3339 with offset") from exc
    payload = {
        "establishment": _digits("CNPJ", cnpj, 14),
        "series": _digits("series", series, 3),
        "number": _digits("number", number, 9),
        "issue_instant": format_instant(instant),
    }
    for name, raw in (("origin_uf", origin), ("dest_uf", dest)):
        abbreviation = normalize_uf(raw)
        if abbreviation is None:
            raise LineError(f"{name} {raw!r} is not a federation unit")
        payload[name] = abbreviation
    try:
        payload["modal"] = Modal(modal.strip().lower()).value
    except ValueError as exc:
        raise LineError(f"unknown modal {modal!r}") from exc
    if not (value.isascii() and value.isdigit()):
        raise LineError(f"freight value {value!r} is not a whole number of cents")
    payload["freight_value"] = int(value)
    payload["cargo_description"] = _text("cargo description", cargo)
    return payload


def _parse_range(span: str) -> tuple[int, int]:
    first, sep, last = span.partition("-")
    if not sep or not (first.isdigit() and last.isdigit()):
        raise LineError(f"numbering range {span!r} must look like <from>-<to>")
    start, end = int(first), int(last)
    if start > end:
        raise LineError(f"numbering range {span!r} starts after it ends")
    if end > MAX_NUMBER:
        raise LineError(f"numbering range {span!r} exceeds nine digits")
    return start, end


def parse_line(line: str) -> tuple[RecordKind, dict]:
    """Raise LineError describing the first problem found."""
    line = line.rstrip("\r\n")
    tag = line.split("|", 1)[0]
    if tag == "CTE":
        return RecordKind.ISSUE, _parse_issue(line.split("|", 9))
    if tag in ("CANCEL", "CORRECT"):
        fields = line.split("|", 2)
        if len(fields) != 3:
            raise LineError(f"{tag} line needs 3 fields, got {len(fields)}")
        key = _digits("access key", fields[1], KEY_LENGTH)
        if tag == "CANCEL":
            return RecordKind.CANCEL, {"access_key": key, "reason": _text("reason", fields[2])}
        return RecordKind.CORRECT, {"access_key": key, "text": _text("correction text", fields[2])}
    if tag == "CANCELNUM":
        fields = line.split("|", 4)
        if len(fields) != 5:
            raise LineError(f"CANCELNUM line needs 5 fields, got {len(fields)}")
        first, last = _parse_range(fields[3])
        return RecordKind.CANCEL_NUMBERING, {
            "establishment": _cnpj(fields[1]),
            "series": _digits("series", fields[2], 3),
            "first": first,
            "last": last,
            "reason": _text("reason", fields[4]),
        }
    raise LineError(f"unknown record type {tag!r}")


def pending_files(in_dir: Path) -> list[Path]:
    if not in_dir.is_dir():
        return []
    return sorted(path for path in in_dir.iterdir() if path.is_file() and path.suffix.lower() == ".txt")


def read_lines(path: Path) -> list[str] | None:
    """None when the file cannot be read yet; the caller retries on the next tick."""
    try:
        text = path.read_text(encoding="utf-8-sig")
    except (OSError, UnicodeDecodeError):
        logger.exception("Cannot read %s; will retry", path)
        return None
    return text.splitlines()


def file_digest(lines: list[str]) -> str:
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()


def mark_done(path: Path, stem: str | None = None) -> None:
    target = path.with_name((stem or path.name) + DONE_SUFFIX)
    try:
        path.replace(target)
    except OSError:
        logger.exception("Cannot rename %s to %s", path, target.name)
