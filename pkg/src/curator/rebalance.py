"""Classification reporting and f1-driven uneven class sizing.

Difficult classes (low f1 on held-out predictions) get a larger share of the
train budget. Shares are proportional to (1 - f1 + epsilon) on top of a
per-class floor and integerized with the largest-remainder method, so the
targets always sum to the budget exactly. Epsilon keeps even a perfect class
above the floor.

``favor_difficult`` realizes a plan: shrinking classes drop their most
redundant members (smallest nearest-neighbor embedding distance), growing
classes pull pool candidates closest to the centroid of that class's
misclassified validation samples, skipping candidates that would immediately
read as duplicates of existing train samples.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .augment import Pool
from .dataset import Dataset, Sample
from .dedupe import pairwise_distances
from .embedder import EmbedderSpec, embed_samples
from .labels import CLASS_LABELS, check_label, class_index
from .seeds import derive_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PredictionRecord:
    sample_id: str
    true_label: str
    predicted_label: str

    def __post_init__(self):
        check_label(self.true_label)
        check_label(self.predicted_label)


@dataclass(frozen=True)
class ClassStats:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ClassReport:
    per_class: Mapping[str, ClassStats]
    accuracy: float
    warnings: tuple[str, ...] = ()

    def classes(self) -> tuple[str, ...]:
        return tuple(c for c in CLASS_LABELS if c in self.per_class)

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "classes": {
                c: {
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "support": s.support,
                }
                for c, s in self.per_class.items()
            },
            "warnings": list(self.warnings),
        }

    def to_text(self) -> str:
        rows = [("class", "precision", "recall", "f1", "support")]
        for c in self.classes():
            s = self.per_class[c]
            rows.append((c, f"{s.precision:.3f}", f"{s.recall:.3f}", f"{s.f1:.3f}", str(s.support)))
        total = sum(s.support for s in self.per_class.values())
        rows.append(("accuracy", "", "", f"{self.accuracy:.3f}", str(total)))
        widths = [max(len(r[i]) for r in rows) for i in range(5)]
        return "\n".join(
            "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows
        )


def classification_report(preds: Sequence[PredictionRecord]) -> ClassReport:
    """Per-class precision/recall/f1 plus overall accuracy.

    Zero-denominator precision/recall report 0 with a warning attached rather
    than NaN, so downstream quota weights stay finite.
    """
    if not preds:
        raise ValueError("cannot build a report from zero predictions")
    seen: set[str] = set()
    for r in preds:
        if r.sample_id in seen:
            raise ValueError(f"duplicate sample_id in predictions: {r.sample_id}")
        seen.add(r.sample_id)
    present = {r.true_label for r in preds} | {r.predicted_label for r in preds}
    warnings: list[str] = []
    per_class: dict[str, ClassStats] = {}
    correct = sum(1 for r in preds if r.true_label == r.predicted_label)
    for c in CLASS_LABELS:
        if c not in present:
            continue
        tp = sum(1 for r in preds if r.true_label == c and r.predicted_label == c)
        fp = sum(1 for r in preds if r.true_label != c and r.predicted_label == c)
        fn = sum(1 for r in preds if r.true_label == c and r.predicted_label != c)
        if tp + fp > 0:
            precision = tp / (tp + fp)
        else:
            precision = 0.0
            warnings.append(f"class {c}: precision undefined (never predicted), reported as 0")
        if tp + fn > 0:
            recall = tp / (tp + fn)
        else:
            recall = 0.0
            warnings.append(f"class {c}: recall undefined (no support), reported as 0")
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_class[c] = ClassStats(precision=precision, recall=recall, f1=f1, support=tp + fn)
    return ClassReport(
        per_class=per_class, accuracy=correct / len(preds), warnings=tuple(warnings)
    )


def read_predictions_csv(path) -> list[PredictionRecord]:
    """CSV with header sample_id,true_label,predicted_label."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"sample_id", "true_label", "predicted_label"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValueError(f"predictions file needs columns {sorted(required)}: {path}")
        return [
            PredictionRecord(row["sample_id"], row["true_label"], row["predicted_label"])
            for row in reader
        ]


def write_predictions_csv(preds: Iterable[PredictionRecord], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "true_label", "predicted_label"])
        for r in preds:
            writer.writerow([r.sample_id, r.true_label, r.predicted_label])
    return path


@dataclass(frozen=True)
class QuotaPlan:
    targets: Mapping[str, int]
    budget: int
    floor: int

    def __post_init__(self):
        targets = {check_label(c): int(n) for c, n in self.targets.items()}
        if sum(targets.values()) != self.budget:
            raise ValueError("quota targets must sum to the budget exactly")
        if any(n < self.floor for n in targets.values()):
            raise ValueError("every quota target must be >= the floor")
        object.__setattr__(self, "targets", targets)

    def to_json(self) -> dict:
        return {"budget": self.budget, "floor": self.floor, "targets": dict(self.targets)}

    @classmethod
    def from_json(cls, data: Mapping) -> "QuotaPlan":
        return cls(
            targets=data["targets"], budget=int(data["budget"]), floor=int(data["floor"])
        )


def compute_quotas(
    report: ClassReport, budget: int, floor: int, epsilon: float = 0.05
) -> QuotaPlan:
    """Split the budget over the report's classes, favoring low f1."""
    classes = report.classes()
    if not classes:
        raise ValueError("report has no classes")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if budget < len(classes) * floor:
        raise ValueError(
            f"budget {budget} below {len(classes)} classes x floor {floor}"
        )
    weights = {c: 1.0 - report.per_class[c].f1 + epsilon for c in classes}
    total_weight = sum(weights.values())
    surplus = budget - len(classes) * floor
    raw = {c: floor + surplus * weights[c] / total_weight for c in classes}
    targets = {c: int(np.floor(raw[c])) for c in classes}
    leftover = budget - sum(targets.values())
    by_remainder = sorted(classes, key=lambda c: (-(raw[c] - targets[c]), class_index(c)))
    for c in by_remainder[:leftover]:
        targets[c] += 1
    return QuotaPlan(targets=targets, budget=budget, floor=floor)


# --- plan realization --------------------------------------------------------


def nearest_neighbor_distances(dist: np.ndarray) -> np.ndarray:
    """Per-row distance to the closest other row; inf for a lone row."""
    n = dist.shape[0]
    if n < 2:
        return np.full(n, np.inf)
    masked = dist + np.diag(np.full(n, np.inf))
    return masked.min(axis=1)


def rank_additions(
    candidates: np.ndarray,
    centroid: np.ndarray,
    existing: np.ndarray,
    threshold: float,
) -> list[int]:
    """Candidate indices nearest the centroid first.

    Candidates within ``threshold`` of an existing row are deferred to the
    back of the order (still ranked) instead of dropped, so a caller that
    must hit an exact count can keep drawing.
    """
    dists = np.linalg.norm(candidates - centroid, axis=1)
    order = sorted(range(len(candidates)), key=lambda i: (dists[i], i))
    if len(existing) == 0 or threshold <= 0:
        return order
    kept, deferred = [], []
    for i in order:
        gap = np.linalg.norm(existing - candidates[i], axis=1).min()
        (deferred if gap <= threshold else kept).append(i)
    return kept + deferred


def favor_difficult(
    train: Dataset,
    pool: Pool,
    plan: QuotaPlan,
    val_preds: Sequence[PredictionRecord],
    val: Dataset,
    spec: EmbedderSpec | None = None,
    threshold: float = 0.0,
    seed: int = 0,
) -> Dataset:
    """Resize classes to the plan, pulling pool samples near the hard cases.

    Classes above target drop their most redundant members. Classes below
    target add pool candidates closest to the centroid of the class's
    misclassified validation samples; with no misclassifications the
    additions fall back to seeded uniform draws.
    """
    spec = spec or EmbedderSpec()
    overlap = train.ids() & pool.ids()
    if overlap:
        raise ValueError(f"pool ids overlap dataset ids: {', '.join(sorted(overlap)[:5])}")
    for label, target in plan.targets.items():
        available = len(train.samples[label]) + len(pool.samples[label])
        if target > available:
            raise ValueError(
                f"target {target} for class {label} unachievable with {available} samples"
            )

    mis_by_class: dict[str, list[str]] = {c: [] for c in CLASS_LABELS}
    for r in val_preds:
        if r.true_label != r.predicted_label:
            mis_by_class[r.true_label].append(r.sample_id)

    buckets: dict[str, tuple[Sample, ...]] = {}
    for ci, label in enumerate(CLASS_LABELS):
        current = list(train.samples[label])
        target = plan.targets.get(label, len(current))
        if target < len(current):
            buckets[label] = _shrink_class(current, target, spec, label)
        elif target > len(current):
            buckets[label] = _grow_class(
                current,
                list(pool.samples[label]),
                target,
                mis_by_class[label],
                val,
                spec,
                threshold,
                derive_rng(seed, "favor", ci),
                label,
            )
        else:
            buckets[label] = tuple(current)
    return Dataset(name=f"{train.name}-rebalanced", split=train.split, samples=buckets)


def _shrink_class(
    current: list[Sample], target: int, spec: EmbedderSpec, label: str
) -> tuple[Sample, ...]:
    matrix = embed_samples(current, spec)
    nn = nearest_neighbor_distances(pairwise_distances(matrix))
    drop_order = sorted(range(len(current)), key=lambda i: (nn[i], current[i].id))
    dropped = set(drop_order[: len(current) - target])
    logger.info(
        "class %s: dropping %d redundant samples: %s",
        label,
        len(dropped),
        ", ".join(current[i].id for i in sorted(dropped)),
    )
    return tuple(s for i, s in enumerate(current) if i not in dropped)


def _grow_class(
    current: list[Sample],
    candidates: list[Sample],
    target: int,
    misclassified_ids: list[str],
    val: Dataset,
    spec: EmbedderSpec,
    threshold: float,
    rng: np.random.Generator,
    label: str,
) -> tuple[Sample, ...]:
    need = target - len(current)
    if misclassified_ids:
        mis_samples = [val.get(i) for i in misclassified_ids]
        centroid = embed_samples(mis_samples, spec).rows.mean(axis=0)
        cand_rows = embed_samples(candidates, spec).rows
        existing_rows = embed_samples(current, spec).rows
        order = rank_additions(cand_rows, centroid, existing_rows, threshold)
        picked = [candidates[i] for i in order[:need]]
    else:
        idx = rng.choice(len(candidates), size=need, replace=False)
        picked = [candidates[int(j)] for j in idx]
    logger.info("class %s: adding %d pool samples: %s", label, need, ", ".join(s.id for s in picked))
    return tuple(current) + tuple(picked)
