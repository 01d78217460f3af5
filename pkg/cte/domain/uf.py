"""Brazilian federation units (IBGE codes)."""

from __future__ import annotations

UF_CODES = {
    "RO": "11",
    "AC": "12",
    "AM": "13",
    "RR": "14",
    "PA": "15",
    "AP": "16",
    "TO": "17",
    "MA": "21",
    "PI": "22",
    "CE": "23",
    "RN": "24",
    "PB": "25",
    "PE": "26",
    "AL": "27",
    "SE": "28",
    "BA": "29",
    "MG": "31",
    "ES": "32",
    "RJ": "33",
    "SP": "35",
    "PR": "41",
    "SC": "42",
    "RS": "43",
    "MS": "50",
    "MT": "51",
    "GO": "52",
    "DF": "53",
}

UF_BY_CODE = {code: abbreviation for abbreviation, code in UF_CODES.items()}


def is_valid_uf_code(value: str | None) -> bool:
    return bool(value) and value in UF_BY_CODE


def normalize_uf(value: str | None) -> str | None:
    """Return the two-letter abbreviation for an abbreviation or numeric code."""
    text = (value or "").strip().upper()
    if text in UF_CODES:
        return text
    return UF_BY_CODE.get(text)


def uf_code(value: str) -> str:
    abbreviation = normalize_uf(value)
    if abbreviation is None:
        raise ValueError(f"Unknown federation unit: {value!r}")
    return UF_CODES[abbreviation]
