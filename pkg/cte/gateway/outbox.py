"""OUT directory writer. Files are derived from the store, so rewriting is harmless."""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import replace
from pathlib import Path

from cte.domain.lifecycle import LifecycleStatus
from cte.services.dacte import dacte_filename, render_dacte, render_dacte_pdf
from cte.store.state import DocRecord, StoreState

logger = logging.getLogger(__name__)


def printable(record: DocRecord):
    return replace(record.document, status=record.status, correction_notes=tuple(record.corrections))


def write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


class Outbox:
    """Writes each OUT record and DACTE once; `out_dir=None` only tracks names (simulations)."""

    def __init__(self, out_dir: Path | None, *, approval: bool = False, pdf: bool = False):
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.approval = approval
        self.pdf = pdf
        self.emitted: set[str] = set()
        self._rendered: dict[str, str] = {}
        self._state = None
        self._outputs_done = 0
        self._printed = 0

    def _emit(self, name: str, render, force: bool = False) -> int:
        if name in self.emitted and not force:
            return 0
        self.emitted.add(name)
        if self.out_dir is None:
            return 1
        path = self.out_dir / name
        if path.exists() and not force:
            return 0
        write_atomic(path, render())
        return 1

    def flush(self, state: StoreState) -> int:
        """Materialize every OUT record and DACTE the state calls for; returns files written."""
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        if state is not self._state:
            self._state, self._outputs_done, self._printed = state, 0, 0
        written = 0
        for record in state.outputs[self._outputs_done :]:
            written += self._emit(record.filename, lambda record=record: (record.line + "\n").encode("utf-8"))
        self._outputs_done = len(state.outputs)
        for key in state.print_queue[self._printed :]:
            record = state.documents[key]
            if record.status is LifecycleStatus.APPROVED:
                written += self.write_dacte(record)
        self._printed = len(state.print_queue)
        if written:
            logger.info("Emitted %d OUT file(s)", written)
        return written

    def _stale(self, name: str, data: bytes) -> bool:
        """True when the DACTE on disk (or last rendered, without a directory) differs from `data`."""
        if self.out_dir is None:
            digest = hashlib.sha256(data).hexdigest()
            if self._rendered.get(name) == digest:
                return False
            self._rendered[name] = digest
            return True
        try:
            return (self.out_dir / name).read_bytes() != data
        except FileNotFoundError:
            return True

    def write_dacte(self, record: DocRecord) -> int:
        # Corrections change the printout; the file is compared with what the store says it should be.
        doc = printable(record)
        name = dacte_filename(record.key)
        text = render_dacte(doc, receipt=record.receipt, approval=self.approval)
        stale = self._stale(name, text)
        written = self._emit(name, lambda: text, stale)
        if self.pdf:
            written += self._emit(
                dacte_filename(record.key, "pdf"),
                lambda: render_dacte_pdf(doc, receipt=record.receipt, approval=self.approval),
                stale,
            )
        return written

    def dacte_count(self) -> int:
        return sum(1 for name in self.emitted if name.startswith("DACTE-") and name.endswith(".txt"))
