from dataclasses import replace

from django.test import SimpleTestCase

from cte.domain.errors import DacteRefused
from cte.domain.lifecycle import LifecycleEvent
from cte.services.dacte import (
    APPROVAL_BANNER,
    WIDTH,
    dacte_filename,
    dacte_lines,
    format_cents,
    render_dacte,
    render_dacte_pdf,
)

from .support import certificate, draft, signed


def _approved(**kwargs):
    doc = signed(draft(**kwargs), certificate())
    for event in (LifecycleEvent.PACKED, LifecycleEvent.RECEIPT_RECEIVED, LifecycleEvent.DOCUMENT_APPROVED):
        doc = doc.with_status(event)
    return doc


class DacteTextTests(SimpleTestCase):
    def test_layout(self):
        doc = _approved()
        lines = dacte_lines(doc, receipt="351709640000001")
        self.assertEqual(lines[0], "DACTE")
        self.assertIn(doc.access_key.grouped, lines)
        self.assertEqual(lines[-1], f"*{doc.key}*")
        self.assertTrue(any("R$ 1,500.00" in line for line in lines))
        self.assertTrue(any("351709640000001" in line for line in lines))
        self.assertNotIn(APPROVAL_BANNER, lines)
        self.assertTrue(all(len(line) <= WIDTH for line in lines))

    def test_rendering_is_deterministic(self):
        doc = _approved(cargo="Frozen fish " * 20)
        self.assertEqual(render_dacte(doc, receipt="1"), render_dacte(doc, receipt="1"))
        self.assertTrue(render_dacte(doc).startswith(b"DACTE\n"))

    def test_approval_environment_banner(self):
        self.assertIn(APPROVAL_BANNER, dacte_lines(_approved(), approval=True))

    def test_corrections_section(self):
        doc = replace(_approved(), correction_notes=("Consignee address fixed",))
        lines = dacte_lines(doc)
        self.assertIn("CORRECTIONS", lines)
        self.assertIn("- Consignee address fixed", lines)
        self.assertNotIn("CORRECTIONS", dacte_lines(_approved()))

    def test_only_approved_documents_print(self):
        for doc in (draft(), draft().with_status(LifecycleEvent.PACKED)):
            with self.subTest(status=doc.status):
                with self.assertRaises(DacteRefused) as ctx:
                    render_dacte(doc)
                self.assertEqual(ctx.exception.code, 406)

    def test_helpers(self):
        self.assertEqual(format_cents(5), "R$ 0.05")
        self.assertEqual(dacte_filename("1" * 44, "pdf"), f"DACTE-{'1' * 44}.pdf")


class DactePdfTests(SimpleTestCase):
    def test_pdf_is_reproducible(self):
        doc = _approved()
        pdf = render_dacte_pdf(doc, receipt="1", approval=True)
        self.assertTrue(pdf.startswith(b"%PDF"))
        self.assertEqual(pdf, render_dacte_pdf(doc, receipt="1", approval=True))

    def test_pdf_refuses_unapproved(self):
        with self.assertRaises(DacteRefused):
            render_dacte_pdf(draft())
