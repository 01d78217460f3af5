from __future__ import annotations

import argparse
import json
import os
import shutil
import signal
import threading
from dataclasses import replace
from pathlib import Path

from django.conf import settings
from django.core.management import call_command
from django.core.management.base import BaseCommand, CommandError

from cte.authority.service import Environment
from cte.domain.document import parse_instant
from cte.domain.errors import ConfigError, DacteRefused, JournalCorruption, UnknownDocument
from cte.gateway import Gateway, load_config
from cte.gateway.outbox import printable
from cte.services import reports
from cte.services.dacte import render_dacte, render_dacte_pdf
from cte.services.simulation import SimulationParams, run_simulation
from cte.store.store import Store

EXIT_CONFIG = 1
EXIT_JOURNAL = 2
EXIT_UNKNOWN_KEY = 3
EXIT_INVARIANT = 4
EXIT_REFUSED = 5


def _timestamp(value: str):
    try:
        return parse_instant(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{value!r} is not an RFC 3339 timestamp with offset") from exc


def _rate(value: str) -> float:
    rate = float(value)
    if not 0.0 <= rate <= 1.0:
        raise argparse.ArgumentTypeError(f"{value} is not within [0, 1]")
    return rate


class Command(BaseCommand):
    help = "CT-e operator tool: inspect the journal, print DACTEs, simulate, run the gateway or the authority."

    def add_arguments(self, parser):
        verbs = parser.add_subparsers(dest="verb", required=True, metavar="verb")

        status = verbs.add_parser("status", help="Current status and history of one document.")
        status.add_argument("access_key")

        errors = verbs.add_parser("errors", help="Parse errors, rejections and anomalies.")
        errors.add_argument("--since", type=_timestamp)

        counts = verbs.add_parser("counts", help="Issued/approved/rejected/cancelled per issue day.")
        counts.add_argument("--from", dest="since", type=_timestamp)
        counts.add_argument("--to", dest="until", type=_timestamp)

        dacte = verbs.add_parser("dacte", help="Print the DACTE of an approved document.")
        dacte.add_argument("access_key")
        dacte.add_argument("--pdf", action="store_true", help="Render the A4 PDF instead of text.")
        dacte.add_argument("--output", type=Path, help="Write to this file instead of stdout.")

        simulate = verbs.add_parser("simulate", help="Seeded end-to-end run against an in-process authority.")
        simulate.add_argument("--days", type=int, required=True)
        simulate.add_argument("--docs-per-day", type=int, required=True)
        simulate.add_argument("--fault-rate", type=_rate, default=0.0)
        simulate.add_argument("--cancel-rate", type=_rate, default=0.0)
        simulate.add_argument("--seed", type=int, default=0)
        simulate.add_argument("--files-per-day", type=int, default=1)
        simulate.add_argument("--delay", type=int, default=0, help="Authority processing delay in ms.")
        simulate.add_argument("--out", type=Path, help="Also write the JSON report to this file.")

        serve = verbs.add_parser("serve-authority", help="Serve the simulated authority over HTTP.")
        serve.add_argument("--env", default=settings.CTE_ENVIRONMENT)
        serve.add_argument("--delay", type=int, default=settings.CTE_AUTHORITY_DELAY_MS, help="Processing delay in ms.")
        serve.add_argument("--listen", default="127.0.0.1:8000")
        serve.add_argument("--threads", type=int, default=4)
        serve.add_argument("--dev", action="store_true", help="Use Django's development server instead of gunicorn.")

        gateway = verbs.add_parser("run-gateway", help="Run the gateway tick loop.")
        gateway.add_argument("--config", required=True, type=Path)
        gateway.add_argument("--once", action="store_true", help="Run a single tick and exit.")

        for sub in verbs.choices.values():
            sub.add_argument("--json", action="store_true", help="One JSON object per line.")
            sub.add_argument("--journal", type=Path, help="Journal path (default: CTE_JOURNAL_PATH).")

    def handle(self, *args, **options):
        handler = getattr(self, "handle_" + options["verb"].replace("-", "_"))
        try:
            handler(options)
        except ConfigError as exc:
            raise CommandError(str(exc), returncode=EXIT_CONFIG) from exc
        except JournalCorruption as exc:
            raise CommandError(str(exc), returncode=EXIT_JOURNAL) from exc
        except UnknownDocument as exc:
            raise CommandError(str(exc), returncode=EXIT_UNKNOWN_KEY) from exc
        except DacteRefused as exc:
            raise CommandError(str(exc), returncode=EXIT_REFUSED) from exc

    # Helpers

    def _store(self, options) -> Store:
        path = options.get("journal") or settings.CTE_JOURNAL_PATH
        if not Path(path).exists():
            return Store.open(None)
        return Store.open(path, fsync=False)

    def _emit_json(self, obj) -> None:
        self.stdout.write(json.dumps(obj, sort_keys=True, ensure_ascii=False))

    # Verbs

    def handle_status(self, options):
        report = reports.document_status(self._store(options), options["access_key"])
        if options["json"]:
            self._emit_json(report)
            return
        for line in reports.format_status(report):
            self.stdout.write(line)

    def handle_errors(self, options):
        rows = reports.validation_errors(self._store(options), since=options["since"])
        if options["json"]:
            for row in rows:
                self._emit_json(row)
            return
        if not rows:
            self.stdout.write(self.style.SUCCESS("No errors."))
            return
        for row in rows:
            code = f" [{row['code']}]" if row["code"] is not None else ""
            self.stdout.write(f"{row['at']}  {row['kind']:<8} {row['ref']}{code}  {row['message']}")

    def handle_counts(self, options):
        rows = reports.daily_counts(self._store(options), since=options["since"], until=options["until"])
        summary = reports.totals(rows)
        if options["json"]:
            for row in rows + [summary]:
                self._emit_json(row)
            return
        self.stdout.write(f"{'date':<12}{'issued':>8}{'approved':>10}{'rejected':>10}{'cancelled':>11}")
        for row in rows + [summary]:
            self.stdout.write(
                f"{row['date']:<12}{row['issued']:>8}{row['approved']:>10}{row['rejected']:>10}{row['cancelled']:>11}"
            )

    def handle_dacte(self, options):
        if options["pdf"] and not options["output"]:
            raise CommandError("A PDF DACTE needs --output", returncode=EXIT_CONFIG)
        store = self._store(options)
        matches = store.query(access_key=options["access_key"])
        if not matches:
            raise UnknownDocument(f"Unknown access key {options['access_key']}")
        record = matches[0]
        approval = settings.CTE_ENVIRONMENT == Environment.APPROVAL.value
        render = render_dacte_pdf if options["pdf"] else render_dacte
        data = render(printable(record), receipt=record.receipt, approval=approval)
        if options["output"]:
            options["output"].write_bytes(data)
            self.stdout.write(self.style.SUCCESS(f"Wrote {options['output']}"))
        else:
            self.stdout.write(data.decode("utf-8"), ending="")

    def handle_simulate(self, options):
        try:
            params = SimulationParams(
                days=options["days"],
                docs_per_day=options["docs_per_day"],
                fault_rate=options["fault_rate"],
                cancel_rate=options["cancel_rate"],
                seed=options["seed"],
                files_per_day=options["files_per_day"],
                delay_ms=options["delay"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        report = run_simulation(params, journal_path=options.get("journal"))
        text = json.dumps(report, sort_keys=True, ensure_ascii=False)
        if options["out"]:
            options["out"].write_text(text + "\n", encoding="utf-8")
        if options["json"]:
            self.stdout.write(text)
        else:
            counts = report["counts"]
            self.stdout.write(
                f"{counts['issued']} issued, {counts['approved']} approved, {counts['rejected']} rejected "
                f"({counts['faulted']} faulted), {counts['cancelled']} cancelled"
            )
            self.stdout.write(f"{report['batches']} batches, {report['dacte_files']} DACTEs, {report['ticks']} ticks")
            self.stdout.write(f"Max ingestion-to-DACTE latency: {report['latency']['max_seconds']}s")
            self.stdout.write(
                f"Storage: {report['storage']['per_month']} per month, {report['storage']['five_years']} in five years"
            )
        if report["violations"]:
            for violation in report["violations"]:
                self.stderr.write(violation)
            raise CommandError("Simulation invariants violated", returncode=EXIT_INVARIANT)

    def handle_serve_authority(self, options):
        try:
            environment = Environment(str(options["env"]).lower())
        except ValueError as exc:
            raise ConfigError(f"Unknown environment {options['env']!r}") from exc
        if options["delay"] < 0:
            raise ConfigError("--delay must not be negative")
        if options["dev"]:
            settings.CTE_ENVIRONMENT = environment.value
            settings.CTE_AUTHORITY_DELAY_MS = options["delay"]
            call_command("runserver", options["listen"], use_reloader=False)
            return
        gunicorn = shutil.which("gunicorn")
        if gunicorn is None:
            raise ConfigError("gunicorn is not installed; use --dev for the development server")
        os.environ["CTE_ENVIRONMENT"] = environment.value
        os.environ["CTE_AUTHORITY_DELAY_MS"] = str(options["delay"])
        # The authority keeps its queues in memory, so it must stay one process.
        argv = [gunicorn, "cte_gateway.wsgi:application", "--bind", options["listen"], "--workers", "1"]
        argv += ["--threads", str(max(1, options["threads"]))]
        self.stdout.write(f"Serving the {environment} authority on {options['listen']}")
        os.execv(gunicorn, argv)

    def handle_run_gateway(self, options):
        config = load_config(options["config"])
        if options.get("journal"):
            config = replace(config, journal_path=options["journal"])
        gateway = Gateway.from_config(config)
        if options["once"]:
            report = gateway.tick()
            if options["json"]:
                self._emit_json(report.to_dict())
            else:
                self.stdout.write(
                    f"ingested={report.ingested} receipts={report.receipts} approved={report.approved} "
                    f"rejected={report.rejected} files={report.files_written}"
                )
            return
        stop = threading.Event()
        for signum in (signal.SIGINT, signal.SIGTERM):
            signal.signal(signum, lambda *_: stop.set())
        gateway.run_forever(stop)
        self.stdout.write("Gateway stopped.")
