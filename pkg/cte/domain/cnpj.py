"""CNPJ registry numbers and their mod-11 check digits."""

from __future__ import annotations

from dataclasses import dataclass

FIRST_WEIGHTS = (5, 4, 3, 2, 9, 8, 7, 6, 5, 4, 3, 2)
SECOND_WEIGHTS = (6, 5, 4, 3, 2, 9, 8, 7, 6, 5, 4, 3, 2)


def _check_digit(digits: str, weights: tuple[int, ...]) -> int:
    remainder = sum(int(d) * w for d, w in zip(digits, weights)) % 11
    return 0 if remainder < 2 else 11 - remainder


def cnpj_check_digits(base12: str) -> str:
    if len(base12) != 12 or not base12.isdigit():
        raise ValueError("CNPJ base must be 12 decimal digits")
    first = _check_digit(base12, FIRST_WEIGHTS)
    second = _check_digit(base12 + str(first), SECOND_WEIGHTS)
    return f"{first}{second}"


def format_cnpj(digits: str) -> str:
    return f"{digits[:2]}.{digits[2:5]}.{digits[5:8]}/{digits[8:12]}-{digits[12:]}"


def validate_cnpj(candidate: str) -> bool:
    if not isinstance(candidate, str) or len(candidate) != 14 or not candidate.isascii():
        return False
    if not candidate.isdigit():
        return False
    return candidate[12:] == cnpj_check_digits(candidate[:12])


def make_cnpj(base12: str) -> "Cnpj":
    return Cnpj(base12 + cnpj_check_digits(base12))


@dataclass(frozen=True)
class Cnpj:
    digits: str

    def __post_init__(self):
        if not validate_cnpj(self.digits):
            raise ValueError(f"Invalid CNPJ: {self.digits!r}")

    def __str__(self):
        return self.digits

    @property
    def formatted(self) -> str:
        return format_cnpj(self.digits)
