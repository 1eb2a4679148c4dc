"""Append-only decision journal for human curation.

Every review action (remove, relabel, pool swap, pool reject) is one JSONL
record with a strictly increasing decision id. The journal is the single
source of truth for manual edits: applying it to the same base dataset and
pool always rebuilds the identical curated dataset, and nothing ever mutates
the base in place, so the full human pass stays auditable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .augment import Pool
from .dataset import Dataset, Sample
from .labels import CLASS_LABELS, check_label

DECISION_KINDS = ("remove_sample", "relabel_sample", "swap_in_pool_sample", "reject_pool_sample")


@dataclass(frozen=True)
class DecisionRecord:
    decision_id: int
    kind: str
    subject_id: str
    pool_id: str | None = None
    new_label: str | None = None
    note: str = ""
    timestamp: str = ""

    def __post_init__(self):
        if self.kind not in DECISION_KINDS:
            raise ValueError(f"unknown decision kind: {self.kind}")
        if self.kind == "swap_in_pool_sample" and not self.pool_id:
            raise ValueError("swap decision needs a pool_id")
        if self.kind == "relabel_sample":
            if not self.new_label:
                raise ValueError("relabel decision needs a new_label")
            check_label(self.new_label)

    def to_json(self) -> dict:
        out = {"decision_id": self.decision_id, "kind": self.kind, "subject_id": self.subject_id}
        if self.pool_id is not None:
            out["pool_id"] = self.pool_id
        if self.new_label is not None:
            out["new_label"] = self.new_label
        if self.note:
            out["note"] = self.note
        if self.timestamp:
            out["timestamp"] = self.timestamp
        return out

    @classmethod
    def from_json(cls, data) -> "DecisionRecord":
        return cls(
            decision_id=int(data["decision_id"]),
            kind=data["kind"],
            subject_id=data["subject_id"],
            pool_id=data.get("pool_id"),
            new_label=data.get("new_label"),
            note=data.get("note", ""),
            timestamp=data.get("timestamp", ""),
        )


class DecisionJournal:
    """Single-writer JSONL journal; each append is fsync'd before returning."""

    def __init__(self, path):
        self.path = Path(path)
        self._records: list[DecisionRecord] = []
        if self.path.exists():
            self._records = _read_jsonl(self.path)
            _check_strictly_increasing(self._records)

    @property
    def records(self) -> tuple[DecisionRecord, ...]:
        return tuple(self._records)

    def next_id(self) -> int:
        return self._records[-1].decision_id + 1 if self._records else 1

    def append(
        self,
        kind: str,
        subject_id: str,
        *,
        pool_id: str | None = None,
        new_label: str | None = None,
        note: str = "",
    ) -> DecisionRecord:
        record = DecisionRecord(
            decision_id=self.next_id(),
            kind=kind,
            subject_id=subject_id,
            pool_id=pool_id,
            new_label=new_label,
            note=note,
            timestamp=datetime.now(timezone.utc).isoformat(),
        )
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a") as fh:
            fh.write(json.dumps(record.to_json()) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        self._records.append(record)
        return record


def _read_jsonl(path: Path) -> list[DecisionRecord]:
    records = []
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(DecisionRecord.from_json(json.loads(line)))
        except (json.JSONDecodeError, KeyError) as exc:
            raise ValueError(f"malformed journal line {line_no}: {path}") from exc
    return records


def _check_strictly_increasing(records: Sequence[DecisionRecord]) -> None:
    for a, b in zip(records, records[1:]):
        if b.decision_id <= a.decision_id:
            raise ValueError(
                f"journal decision ids not strictly increasing: {a.decision_id} then {b.decision_id}"
            )


class JournalReplay:
    """Mutable replay state; validates each decision against what's live.

    Shared by ``apply_decisions`` (whole-journal replay) and the review
    service (incremental validation before appending), so both reject the
    same conflicts with the same wording.
    """

    def __init__(self, base: Dataset, pool: Pool | None):
        self.base = base
        self.buckets: dict[str, list[Sample]] = {
            c: list(base.samples[c]) for c in CLASS_LABELS
        }
        self.live: dict[str, str] = {s.id: s.label for s in base.iter_samples()}
        self.pool_index: dict[str, Sample] = (
            {s.id: s for s in pool.iter_samples()} if pool else {}
        )
        self.removed: dict[str, int] = {}
        self.used_pool: dict[str, int] = {}
        self.rejected_pool: dict[str, int] = {}

    def apply(self, record: DecisionRecord) -> None:
        handler = {
            "remove_sample": self._remove,
            "relabel_sample": self._relabel,
            "swap_in_pool_sample": self._swap,
            "reject_pool_sample": self._reject,
        }[record.kind]
        handler(record)

    def _take_out(self, sample_id: str, record: DecisionRecord) -> Sample:
        if sample_id in self.removed:
            raise ValueError(
                f"decision {record.decision_id} conflicts with decision "
                f"{self.removed[sample_id]}: sample {sample_id} already removed"
            )
        if sample_id not in self.live:
            raise ValueError(
                f"decision {record.decision_id}: unknown sample id: {sample_id}"
            )
        label = self.live.pop(sample_id)
        bucket = self.buckets[label]
        for i, s in enumerate(bucket):
            if s.id == sample_id:
                return bucket.pop(i)
        raise AssertionError(f"live index out of sync for {sample_id}")

    def _remove(self, record: DecisionRecord) -> None:
        self._take_out(record.subject_id, record)
        self.removed[record.subject_id] = record.decision_id

    def _relabel(self, record: DecisionRecord) -> None:
        sample = self._take_out(record.subject_id, record)
        relabeled = replace(sample, label=record.new_label)
        self.buckets[record.new_label].append(relabeled)
        self.live[record.subject_id] = record.new_label

    def _swap(self, record: DecisionRecord) -> None:
        pool_id = record.pool_id
        if pool_id in self.used_pool:
            raise ValueError(
                f"decision {record.decision_id} conflicts with decision "
                f"{self.used_pool[pool_id]}: pool sample {pool_id} already swapped in"
            )
        if pool_id in self.rejected_pool:
            raise ValueError(
                f"decision {record.decision_id} conflicts with decision "
                f"{self.rejected_pool[pool_id]}: pool sample {pool_id} was rejected"
            )
        if pool_id not in self.pool_index:
            raise ValueError(f"decision {record.decision_id}: unknown pool id: {pool_id}")
        incoming = self.pool_index[pool_id]
        subject_label = self.live.get(record.subject_id)
        if subject_label is None:
            self._take_out(record.subject_id, record)  # raises with the right message
        if incoming.label != subject_label:
            raise ValueError(
                f"decision {record.decision_id}: class mismatch on swap: "
                f"{record.subject_id} is {subject_label}, {pool_id} is {incoming.label}"
            )
        self._take_out(record.subject_id, record)
        self.removed[record.subject_id] = record.decision_id
        self.buckets[incoming.label].append(incoming)
        self.live[incoming.id] = incoming.label
        self.used_pool[pool_id] = record.decision_id

    def _reject(self, record: DecisionRecord) -> None:
        pool_id = record.subject_id
        if pool_id in self.rejected_pool:
            raise ValueError(
                f"decision {record.decision_id} conflicts with decision "
                f"{self.rejected_pool[pool_id]}: pool sample {pool_id} already rejected"
            )
        if pool_id in self.used_pool:
            raise ValueError(
                f"decision {record.decision_id} conflicts with decision "
                f"{self.used_pool[pool_id]}: pool sample {pool_id} already swapped in"
            )
        if pool_id not in self.pool_index:
            raise ValueError(f"decision {record.decision_id}: unknown pool id: {pool_id}")
        self.rejected_pool[pool_id] = record.decision_id

    def to_dataset(self, name: str | None = None) -> Dataset:
        return Dataset(
            name=name or f"{self.base.name}-curated",
            split=self.base.split,
            samples={c: tuple(b) for c, b in self.buckets.items()},
        )


def apply_decisions(
    records: Iterable[DecisionRecord], base: Dataset, pool: Pool | None = None
) -> Dataset:
    """Replay a journal against a base dataset; pure and idempotent."""
    ordered = sorted(records, key=lambda r: r.decision_id)
    _check_strictly_increasing(ordered)
    state = JournalReplay(base, pool)
    for record in ordered:
        state.apply(record)
    return state.to_dataset()
