import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from cte.domain.cnpj import validate_cnpj
from cte.services.simulation import SimulationParams, mistype_cnpj, run_simulation, split_evenly
from cte.store.store import Store

from .support import ISSUER


class SimulationHelperTests(SimpleTestCase):
    def test_split_evenly(self):
        self.assertEqual(split_evenly(10, 3), [4, 3, 3])
        self.assertEqual(split_evenly(2, 4), [1, 1, 0, 0])

    def test_mistyped_cnpj_fails_validation(self):
        self.assertEqual(len(mistype_cnpj(ISSUER)), 14)
        self.assertFalse(validate_cnpj(mistype_cnpj(ISSUER)))

    def test_parameter_bounds(self):
        for kwargs in ({"days": 0}, {"fault_rate": 1.5}, {"cancel_rate": -0.1}, {"files_per_day": 0}):
            with self.subTest(**kwargs), self.assertRaises(ValueError):
                SimulationParams(**kwargs)


class SimulationRunTests(SimpleTestCase):
    def test_one_day_of_a_thousand_documents(self):
        report = run_simulation(SimulationParams(days=1, docs_per_day=1000, seed=7))
        self.assertTrue(report["invariants_ok"], report["violations"])
        counts = report["counts"]
        self.assertEqual(counts["issued"], 1000)
        self.assertEqual(counts["approved"], 1000)
        self.assertEqual(counts["rejected"], 0)
        self.assertEqual(report["batches"], 20)
        self.assertEqual(report["dacte_files"], 1000)
        self.assertEqual(report["authority"]["received"], 20)
        self.assertLessEqual(report["latency"]["max_seconds"], 120)
        self.assertEqual(report["anomalies"], [])

    def test_same_seed_same_report(self):
        params = SimulationParams(days=2, docs_per_day=120, files_per_day=3, cancel_rate=0.1, fault_rate=0.05, seed=3)
        first, second = run_simulation(params), run_simulation(params)
        self.assertEqual(first, second)
        other = run_simulation(SimulationParams(days=2, docs_per_day=120, seed=4))
        self.assertNotEqual(first["journal"]["sha256"], other["journal"]["sha256"])

    def test_five_days_with_mistyped_cnpjs(self):
        report = run_simulation(SimulationParams(days=5, docs_per_day=1000, fault_rate=0.01, seed=11))
        self.assertTrue(report["invariants_ok"], report["violations"])
        counts = report["counts"]
        self.assertEqual(counts["issued"], 5000)
        self.assertEqual(counts["rejected"], counts["faulted"])
        self.assertEqual(counts["approved"] + counts["rejected"], 5000)
        self.assertLessEqual(report["latency"]["max_seconds"], 120)

    def test_cancellations(self):
        report = run_simulation(SimulationParams(days=1, docs_per_day=200, cancel_rate=0.25, seed=5))
        self.assertTrue(report["invariants_ok"], report["violations"])
        self.assertEqual(report["counts"]["cancelled"], report["counts"]["cancel_lines"])
        self.assertEqual(report["counts"]["approved"], 200)

    def test_twenty_days_and_storage_projection(self):
        report = run_simulation(SimulationParams(days=20, docs_per_day=100, seed=1))
        self.assertTrue(report["invariants_ok"], report["violations"])
        self.assertEqual(report["counts"]["issued"], 2000)
        self.assertEqual(len(report["daily"]), 20)
        storage = report["storage"]
        (month,) = storage["months"]
        self.assertEqual((month["month"], month["active_days"], month["documents"]), ("2024-01", 20, 2000))
        self.assertEqual(month["events"], report["journal"]["events"])
        self.assertEqual((storage["per_month"], storage["five_years"]), (2000, 120000))
        self.assertEqual(storage["events_per_month"], month["events"])

    def test_storage_measured_over_three_months(self):
        with tempfile.TemporaryDirectory() as tmp:
            journal = Path(tmp) / "journal.bin"
            report = run_simulation(SimulationParams(days=91, docs_per_day=5, seed=6), journal_path=journal)
            journal_size = journal.stat().st_size
        self.assertTrue(report["invariants_ok"], report["violations"])
        storage = report["storage"]
        self.assertEqual(
            [(row["month"], row["active_days"], row["documents"]) for row in storage["months"]],
            [("2024-01", 31, 155), ("2024-02", 29, 145), ("2024-03", 31, 155)],
        )
        events = sum(row["events"] for row in storage["months"])
        self.assertEqual(events, report["journal"]["events"])
        self.assertEqual(sum(row["journal_bytes"] for row in storage["months"]), journal_size)
        self.assertEqual(storage["per_month"], 100)
        self.assertEqual(storage["five_years"], 6000)
        self.assertEqual(storage["events_per_month"], round(events / 91 * 20))
        self.assertEqual(storage["five_years_events"], storage["events_per_month"] * 60)

    def test_journal_written_to_disk_replays(self):
        with tempfile.TemporaryDirectory() as tmp:
            journal = Path(tmp) / "journal.bin"
            report = run_simulation(SimulationParams(days=1, docs_per_day=30, seed=2), journal_path=journal)
            reopened = Store.open(journal, fsync=False)
            self.assertEqual(reopened.state.last_seq, report["journal"]["events"])
            self.assertTrue(report["invariants_ok"], report["violations"])
