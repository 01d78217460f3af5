"""44-digit CT-e access keys."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

from .errors import FieldWidthError

MODEL = "57"
KEY_LENGTH = 44

# (name, width) in rendered order; the check digit closes the key.
LAYOUT = (
    ("uf_code", 2),
    ("yymm", 4),
    ("issuer", 14),
    ("model", 2),
    ("series", 3),
    ("number", 9),
    ("emission_type", 1),
    ("random", 8),
)


def key_check_digit(digits43: str) -> str:
    total = 0
    weight = 2
    for digit in reversed(digits43):
        total += int(digit) * weight
        weight = 2 if weight == 9 else weight + 1
    digit = 11 - (total % 11)
    return "0" if digit >= 10 else str(digit)


def _require_width(name: str, value: str, width: int) -> None:
    if not isinstance(value, str) or len(value) != width or not (value.isascii() and value.isdigit()):
        raise FieldWidthError(f"{name} must be exactly {width} decimal digits, got {value!r}")


@dataclass(frozen=True)
class AccessKey:
    uf_code: str
    yymm: str
    issuer: str
    model: str
    series: str
    number: str
    emission_type: str
    random: str
    check_digit: str

    def __post_init__(self):
        for name, width in LAYOUT:
            _require_width(name, getattr(self, name), width)
        _require_width("check_digit", self.check_digit, 1)

    @property
    def body(self) -> str:
        return "".join(getattr(self, name) for name, _ in LAYOUT)

    def __str__(self):
        return self.body + self.check_digit

    @property
    def grouped(self) -> str:
        text = str(self)
        return " ".join(text[i : i + 4] for i in range(0, KEY_LENGTH, 4))


def compute_access_key(
    *,
    uf_code: str,
    issue_instant: datetime,
    issuer: str,
    series: str,
    number: str,
    random_seed: str,
    emission_type: str = "1",
) -> AccessKey:
    _require_width("random_seed", random_seed, 8)
    yymm = issue_instant.strftime("%y%m")
    fields = {
        "uf_code": uf_code,
        "yymm": yymm,
        "issuer": issuer,
        "model": MODEL,
        "series": series,
        "number": number,
        "emission_type": emission_type,
        "random": random_seed,
    }
    for name, width in LAYOUT:
        _require_width(name, fields[name], width)
    body = "".join(fields[name] for name, _ in LAYOUT)
    return AccessKey(**fields, check_digit=key_check_digit(body))


def verify_access_key(key: str | AccessKey) -> bool:
    text = str(key)
    if len(text) != KEY_LENGTH or not text.isascii() or not text.isdigit():
        return False
    if text[20:22] != MODEL:
        return False
    return key_check_digit(text[:43]) == text[43]


def parse_access_key(text: str) -> AccessKey:
    text = (text or "").strip()
    if len(text) != KEY_LENGTH or not (text.isascii() and text.isdigit()):
        raise FieldWidthError(f"Access key must be {KEY_LENGTH} digits, got {text!r}")
    values = {}
    offset = 0
    for name, width in LAYOUT:
        values[name] = text[offset : offset + width]
        offset += width
    return AccessKey(**values, check_digit=text[offset])
