"""Canonical data model: items, labels with provenance, the class registry,
dataset snapshots, and the append-only label store.

The store keeps full assignment history; one assignment per item is ACTIVE
at a time. Reviewer-grade provenance (MANUAL, CLUSTER_MAJORITY) overrides
anything; machine provenance (SELF_TRAINED, PREDICTED) never displaces a
reviewer-grade assignment — such writes are kept in history but shadowed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, IO, Iterable, Iterator

import numpy as np

from .validation import check_confidence


class Provenance(str, Enum):
    MANUAL = "MANUAL"
    CLUSTER_MAJORITY = "CLUSTER_MAJORITY"
    SELF_TRAINED = "SELF_TRAINED"
    PREDICTED = "PREDICTED"

    @property
    def reviewer_grade(self) -> bool:
        return self in (Provenance.MANUAL, Provenance.CLUSTER_MAJORITY)


class DataFormatError(ValueError):
    """Malformed manifest, blob, or journal input."""


class UnknownItemError(KeyError):
    """Operation referenced an item id that was never ingested."""


@dataclass(frozen=True)
class ItemRecord:
    item_id: str
    subject_id: str | None = None
    captured_at: str | None = None
    source_uri: str | None = None
    embedding_row: int | None = None

    def __post_init__(self):
        if self.captured_at is not None:
            try:
                datetime.fromisoformat(self.captured_at.replace("Z", "+00:00"))
            except ValueError as exc:
                raise DataFormatError(
                    f"item {self.item_id}: captured_at {self.captured_at!r} "
                    f"is not ISO-8601"
                ) from exc
        if self.embedding_row is not None and self.embedding_row < 0:
            raise DataFormatError(
                f"item {self.item_id}: negative embedding_row"
            )


@dataclass(frozen=True)
class LabelAssignment:
    item_id: str
    label: str
    provenance: Provenance
    confidence: float
    iteration: int
    assigned_at: str

    def export_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "label": self.label,
            "provenance": self.provenance.value,
            "confidence": self.confidence,
            "iteration": self.iteration,
        }


class ClassRegistry:
    """Ordered set of class names; version increments on each addition."""

    def __init__(self, names: Iterable[str] = ()):
        self._names: list[str] = []
        self._index: dict[str, int] = {}
        self.version = 0
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        if not name:
            raise ValueError("class name must be non-empty")
        if name in self._index:
            return self._index[name]
        self._index[name] = len(self._names)
        self._names.append(name)
        self.version += 1
        return self._index[name]

    def index_of(self, name: str) -> int:
        return self._index[name]

    @property
    def names(self) -> list[str]:
        return list(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._index


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


class LabelStore:
    """Append-only assignment history with an ACTIVE pointer per item.

    Mutations may be mirrored to a journal through ``on_event``; replay of
    those events through :meth:`apply` reconstructs identical state.
    """

    def __init__(
        self,
        registry: ClassRegistry | None = None,
        on_event: Callable[[dict], None] | None = None,
        clock: Callable[[], str] = utc_now_iso,
    ):
        self.registry = registry if registry is not None else ClassRegistry()
        self._history: list[LabelAssignment] = []
        self._active: dict[str, LabelAssignment] = {}
        self._known_items: set[str] | None = None
        self._on_event = on_event
        self._clock = clock

    def restrict_items(self, item_ids: set[str]) -> None:
        """Make assignments to ids outside this set an error."""
        self._known_items = item_ids

    def assign(
        self,
        item_id: str,
        label: str,
        provenance: Provenance | str,
        confidence: float,
        iteration: int,
        assigned_at: str | None = None,
        _replay: bool = False,
    ) -> LabelAssignment:
        provenance = Provenance(provenance)
        if not label:
            raise ValueError("label must be non-empty")
        confidence = check_confidence(confidence)
        if provenance is Provenance.MANUAL and confidence != 1.0:
            raise ValueError("MANUAL assignments must carry confidence 1.0")
        if iteration < 0:
            raise ValueError("iteration must be non-negative")
        if self._known_items is not None and item_id not in self._known_items:
            raise UnknownItemError(item_id)

        record = LabelAssignment(
            item_id=item_id,
            label=label,
            provenance=provenance,
            confidence=confidence,
            iteration=iteration,
            assigned_at=assigned_at or self._clock(),
        )
        self._history.append(record)
        current = self._active.get(item_id)
        shadowed = (
            current is not None
            and current.provenance.reviewer_grade
            and not provenance.reviewer_grade
        )
        if not shadowed:
            self._active[item_id] = record
        self.registry.add(label)
        if self._on_event is not None and not _replay:
            self._on_event(
                {
                    "event": "label",
                    "item_id": record.item_id,
                    "label": record.label,
                    "provenance": record.provenance.value,
                    "confidence": record.confidence,
                    "iteration": record.iteration,
                    "assigned_at": record.assigned_at,
                }
            )
        return record

    def apply(self, event: dict) -> None:
        """Replay a journaled label event."""
        self.assign(
            event["item_id"],
            event["label"],
            event["provenance"],
            event["confidence"],
            event["iteration"],
            assigned_at=event["assigned_at"],
            _replay=True,
        )

    def active(self, item_id: str) -> LabelAssignment | None:
        return self._active.get(item_id)

    def active_labels(
        self,
        provenance_filter: set[Provenance] | set[str] | None = None,
        iteration_filter: range | tuple[int, int] | None = None,
    ) -> list[LabelAssignment]:
        wanted = None
        if provenance_filter is not None:
            wanted = {Provenance(p) for p in provenance_filter}
        lo = hi = None
        if iteration_filter is not None:
            if isinstance(iteration_filter, range):
                lo, hi = iteration_filter.start, iteration_filter.stop - 1
            else:
                lo, hi = iteration_filter
        out = []
        for item_id in sorted(self._active):
            rec = self._active[item_id]
            if wanted is not None and rec.provenance not in wanted:
                continue
            if lo is not None and not (lo <= rec.iteration <= hi):
                continue
            out.append(rec)
        return out

    def history(self) -> list[LabelAssignment]:
        return list(self._history)

    def __len__(self) -> int:
        return len(self._history)

    def export_labels(self, sink: IO[bytes] | IO[str]) -> int:
        """Write ACTIVE assignments as JSON lines, sorted by item id.

        The output is canonical (fixed key order, shortest-round-trip
        floats), so exporting, re-ingesting, and exporting again is
        byte-identical.
        """
        count = 0
        for rec in self.active_labels():
            line = json.dumps(rec.export_dict(), separators=(",", ":")) + "\n"
            try:
                sink.write(line)
            except TypeError:
                sink.write(line.encode("utf-8"))
            count += 1
        return count

    def import_labels(self, lines: Iterable[str]) -> int:
        """Re-ingest an export produced by :meth:`export_labels`."""
        count = 0
        for ln, raw in enumerate(lines, 1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"label line {ln}: invalid JSON") from exc
            self.assign(
                obj["item_id"],
                obj["label"],
                obj["provenance"],
                obj["confidence"],
                obj["iteration"],
            )
            count += 1
        return count


@dataclass
class DatasetSnapshot:
    """Items plus embeddings plus the three disjoint campaign partitions."""

    items: dict[str, ItemRecord]
    embeddings: np.ndarray
    labeled_train: set[str] = field(default_factory=set)
    unlabeled_pool: set[str] = field(default_factory=set)
    held_out_test: set[str] = field(default_factory=set)

    def check_partitions(self) -> None:
        parts = [self.labeled_train, self.unlabeled_pool, self.held_out_test]
        names = ["labeled_train", "unlabeled_pool", "held_out_test"]
        for i in range(len(parts)):
            for j in range(i + 1, len(parts)):
                overlap = parts[i] & parts[j]
                if overlap:
                    raise AssertionError(
                        f"partitions {names[i]} and {names[j]} overlap: "
                        f"{sorted(overlap)[:3]}"
                    )
        unknown = set().union(*parts) - set(self.items)
        if unknown:
            raise AssertionError(f"partition members not in items: {sorted(unknown)[:3]}")

    def rows_for(self, item_ids: Iterable[str]) -> np.ndarray:
        idx = [self.items[i].embedding_row for i in item_ids]
        if any(r is None for r in idx):
            missing = [i for i in item_ids if self.items[i].embedding_row is None]
            raise UnknownItemError(f"items without embeddings: {missing[:3]}")
        return self.embeddings[np.asarray(idx, dtype=int)]

    def move_to_train(self, item_ids: Iterable[str]) -> None:
        for item_id in item_ids:
            if item_id in self.unlabeled_pool:
                self.unlabeled_pool.discard(item_id)
                self.labeled_train.add(item_id)
        self.check_partitions()


def parse_manifest_line(raw: str, lineno: int) -> tuple[ItemRecord, bool]:
    """Parse one manifest JSON line into (record, is_test)."""
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"manifest line {lineno}: invalid JSON") from exc
    if not isinstance(obj, dict) or "item_id" not in obj:
        raise DataFormatError(f"manifest line {lineno}: missing item_id")
    record = ItemRecord(
        item_id=str(obj["item_id"]),
        subject_id=obj.get("subject_id"),
        captured_at=obj.get("captured_at"),
        source_uri=obj.get("source_uri"),
        embedding_row=obj.get("embedding_row"),
    )
    return record, bool(obj.get("test", False))


def ingest(
    manifest_lines: Iterable[str],
    embeddings: np.ndarray,
) -> DatasetSnapshot:
    """Build a snapshot from manifest lines and a loaded embedding matrix.

    Items flagged ``test`` land in held_out_test, everything else in the
    unlabeled pool. Duplicate ids and out-of-range embedding rows are
    rejected with the offending id/row named.
    """
    n = embeddings.shape[0]
    items: dict[str, ItemRecord] = {}
    test_ids: set[str] = set()
    for lineno, raw in enumerate(manifest_lines, 1):
        raw = raw.strip()
        if not raw:
            continue
        record, is_test = parse_manifest_line(raw, lineno)
        if record.item_id in items:
            raise DataFormatError(
                f"manifest line {lineno}: duplicate item_id {record.item_id!r}"
            )
        if record.embedding_row is not None and record.embedding_row >= n:
            raise DataFormatError(
                f"manifest line {lineno}: embedding_row {record.embedding_row} "
                f"out of range for blob with n={n}"
            )
        items[record.item_id] = record
        if is_test:
            test_ids.add(record.item_id)
    snapshot = DatasetSnapshot(
        items=items,
        embeddings=embeddings,
        unlabeled_pool=set(items) - test_ids,
        held_out_test=test_ids,
    )
    snapshot.check_partitions()
    return snapshot


def iter_jsonl(path: str) -> Iterator[str]:
    with open(path, "r", encoding="utf-8") as fh:
        yield from fh
