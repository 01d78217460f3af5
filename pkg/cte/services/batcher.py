"""Greedy packing of signed drafts into transmission batches."""

from __future__ import annotations

from dataclasses import dataclass, field

from lxml import etree

from cte.domain.document import CTeDocument, canonical_serialize, document_from_element, parse_xml
from cte.domain.errors import OversizedDocument
from cte.domain.lifecycle import LifecycleEvent

MAX_DOCUMENTS = 50
MAX_BATCH_BYTES = 500 * 1024

_FOOTER = b"</cteBatch>"


@dataclass
class Batch:
    batch_id: int
    establishment: str
    documents: list[CTeDocument]
    serialized_size: int
    receipt: str | None = None
    result_code: int | None = None

    @property
    def access_keys(self) -> list[str]:
        return [doc.key for doc in self.documents]


@dataclass
class PackResult:
    batches: list[Batch] = field(default_factory=list)
    oversized: list[OversizedDocument] = field(default_factory=list)


def _header(batch_id: int, establishment: str, count: int) -> bytes:
    return f'<cteBatch batchId="{batch_id}" establishment="{establishment}" count="{count}">'.encode("ascii")


def batch_size(batch_id: int, establishment: str, doc_sizes: list[int]) -> int:
    return len(_header(batch_id, establishment, len(doc_sizes))) + sum(doc_sizes) + len(_FOOTER)


def wrap_batch(batch_id: int, establishment: str, documents: list[bytes]) -> bytes:
    """Wrap already-serialized <cte> elements; no constraint is checked."""
    return _header(batch_id, establishment, len(documents)) + b"".join(documents) + _FOOTER


def serialize_batch(batch: Batch) -> bytes:
    return wrap_batch(batch.batch_id, batch.establishment, [canonical_serialize(doc) for doc in batch.documents])


def pack(docs: list[CTeDocument], first_batch_id: int = 1) -> PackResult:
    """Partition by establishment (first appearance order), then fill batches sequentially."""
    groups: dict[str, list[CTeDocument]] = {}
    for doc in docs:
        groups.setdefault(doc.establishment, []).append(doc)

    result = PackResult()
    next_id = first_batch_id
    for establishment, members in groups.items():
        current: list[CTeDocument] = []
        sizes: list[int] = []

        def close():
            nonlocal next_id, current, sizes
            if current:
                size = batch_size(next_id, establishment, sizes)
                result.batches.append(
                    Batch(
                        batch_id=next_id,
                        establishment=establishment,
                        documents=[doc.with_status(LifecycleEvent.PACKED) for doc in current],
                        serialized_size=size,
                    )
                )
                next_id += 1
            current, sizes = [], []

        for doc in members:
            doc_size = len(canonical_serialize(doc))
            single = batch_size(next_id, establishment, [doc_size])
            if single > MAX_BATCH_BYTES:
                result.oversized.append(OversizedDocument(doc, single))
                continue
            fits = len(current) < MAX_DOCUMENTS and batch_size(next_id, establishment, sizes + [doc_size]) <= MAX_BATCH_BYTES
            if not fits:
                close()
            current.append(doc)
            sizes.append(doc_size)
        close()
    return result


@dataclass
class BatchContent:
    batch_id: str
    establishment: str
    count: int
    documents: list[CTeDocument]


def parse_batch(data: bytes) -> BatchContent:
    """Raise ValueError (or lxml's XMLSyntaxError) when the batch does not follow the schema."""
    root = parse_xml(data)
    if root.tag != "cteBatch":
        raise ValueError(f"Expected <cteBatch>, got <{root.tag}>")
    count_text = root.get("count", "")
    if not count_text.isdigit():
        raise ValueError(f"count attribute is not an integer: {count_text!r}")
    children = [child for child in root if isinstance(child.tag, str)]
    if not children:
        raise ValueError("Batch holds no documents")
    if int(count_text) != len(children):
        raise ValueError(f"count={count_text} but {len(children)} documents present")
    return BatchContent(
        batch_id=root.get("batchId", ""),
        establishment=root.get("establishment", ""),
        count=len(children),
        documents=[document_from_element(child) for child in children],
    )


def batch_document_count(data: bytes) -> int:
    """Count <cte> children without building documents; -1 when not parseable."""
    try:
        root = parse_xml(data)
    except etree.XMLSyntaxError:
        return -1
    return sum(1 for child in root if child.tag == "cte")
