"""DACTE printouts: an 80-column text sheet and an A4 PDF."""

from __future__ import annotations

import logging
import textwrap
from decimal import Decimal
from io import BytesIO

from reportlab.graphics.barcode import code128
from reportlab.lib.pagesizes import A4
from reportlab.lib.units import mm
from reportlab.pdfgen import canvas

from cte.domain.cnpj import format_cnpj
from cte.domain.document import CTeDocument, format_instant
from cte.domain.errors import DacteRefused
from cte.domain.lifecycle import LifecycleStatus

logger = logging.getLogger(__name__)

WIDTH = 80
RULE = "=" * WIDTH
THIN_RULE = "-" * WIDTH
APPROVAL_BANNER = "NO FISCAL VALUE - APPROVAL ENVIRONMENT"


def format_cents(cents: int) -> str:
    return f"R$ {Decimal(cents) / 100:,.2f}"


def dacte_filename(access_key: str, suffix: str = "txt") -> str:
    return f"DACTE-{access_key}.{suffix}"


def _pair(left: str, right: str) -> str:
    return f"{left:<40}{right}"[:WIDTH]


def dacte_lines(doc: CTeDocument, *, receipt: str | None = None, approval: bool = False) -> list[str]:
    if doc.status is not LifecycleStatus.APPROVED:
        raise DacteRefused(f"Document {doc.key} is {doc.status}; DACTE needs Approved")
    key = doc.access_key
    lines = [
        "DACTE",
        "AUXILIARY DOCUMENT OF THE ELECTRONIC BILL OF LADING (CT-e)",
    ]
    if approval:
        lines.append(APPROVAL_BANNER)
    lines += [
        RULE,
        "ACCESS KEY",
        key.grouped,
        THIN_RULE,
        _pair(f"ISSUER CNPJ: {format_cnpj(doc.establishment)}", f"MODEL: {key.model}"),
        _pair(f"SERIES: {doc.series}", f"NUMBER: {doc.number}"),
        _pair(f"ISSUED: {format_instant(doc.issue_instant)}", f"MODAL: {doc.modal.value.upper()}"),
        _pair(f"ORIGIN: {doc.origin_uf}", f"DESTINATION: {doc.dest_uf}"),
        _pair(f"FREIGHT VALUE: {format_cents(doc.freight_value)}", f"RECEIPT: {receipt or '-'}"),
        THIN_RULE,
        "CARGO",
    ]
    lines += textwrap.wrap(doc.cargo_description, WIDTH) or [""]
    if doc.correction_notes:
        lines += [THIN_RULE, "CORRECTIONS"]
        for note in doc.correction_notes:
            lines += textwrap.wrap(f"- {note}", WIDTH) or ["-"]
    lines += [RULE, f"*{key}*"]
    return lines


def render_dacte(doc: CTeDocument, *, receipt: str | None = None, approval: bool = False) -> bytes:
    return ("\n".join(dacte_lines(doc, receipt=receipt, approval=approval)) + "\n").encode("utf-8")


def render_dacte_pdf(doc: CTeDocument, *, receipt: str | None = None, approval: bool = False) -> bytes:
    lines = dacte_lines(doc, receipt=receipt, approval=approval)
    output = BytesIO()
    # invariant=1 keeps creation dates and ids out, so output is reproducible.
    pdf_canvas = canvas.Canvas(output, pagesize=A4, invariant=1)
    pdf_canvas.setTitle(f"DACTE {doc.key}")
    width, height = A4
    margin = 15 * mm
    font_size = 8.5
    pdf_canvas.setFont("Courier", font_size)
    y = height - margin
    for line in lines[:-1]:
        pdf_canvas.drawString(margin, y, line)
        y -= font_size * 1.35
        if y < margin + 25 * mm:
            pdf_canvas.showPage()
            pdf_canvas.setFont("Courier", font_size)
            y = height - margin
    barcode = code128.Code128(doc.key, barHeight=12 * mm, barWidth=0.25 * mm)
    barcode.drawOn(pdf_canvas, margin, y - 14 * mm)
    pdf_canvas.drawString(margin, y - 18 * mm, doc.key)
    pdf_canvas.showPage()
    pdf_canvas.save()
    return output.getvalue()
