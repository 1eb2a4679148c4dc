"""Class-partitioned grayscale image datasets with provenance manifests.

Datasets are immutable after construction; every operation returns a new
value. On disk a dataset is one directory per class of 8-bit grayscale PNGs
plus a ``manifest.json`` carrying ids, provenance, lineage and a content
hash. The manifest is the source of truth when present; bare directories
load with provenance ``raw``.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np
from PIL import Image, UnidentifiedImageError

from .labels import CLASS_LABELS, class_index

PROVENANCES = ("raw", "cleaned", "synthetic", "augmented")
SPLITS = ("train", "val")
MANIFEST_NAME = "manifest.json"
MIN_SIDE = 8


@dataclass(frozen=True)
class Lineage:
    """Where an augmented sample came from: parent id + pipeline descriptor.

    ``pipeline`` is a tuple of JSON-ready step records ``{kind, params, seed}``.
    """

    parent_id: str
    pipeline: tuple = ()

    def to_json(self) -> dict:
        return {"parent_id": self.parent_id, "pipeline": [dict(p) for p in self.pipeline]}

    @classmethod
    def from_json(cls, data: Mapping) -> "Lineage":
        return cls(parent_id=data["parent_id"], pipeline=tuple(data.get("pipeline", ())))


@dataclass(frozen=True, eq=False)
class Sample:
    id: str
    label: str
    image: np.ndarray  # (H, W) uint8
    provenance: str = "raw"
    lineage: Lineage | None = None

    def __post_init__(self):
        class_index(self.label)
        img = np.asarray(self.image)
        if img.dtype != np.uint8 or img.ndim != 2:
            raise ValueError(f"sample {self.id}: image must be a 2-D uint8 array")
        h, w = img.shape
        if w < MIN_SIDE or h < MIN_SIDE:
            raise ValueError(f"sample {self.id}: image is {w}x{h}, minimum side is {MIN_SIDE}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"sample {self.id}: unknown provenance {self.provenance!r}")
        if (self.provenance == "augmented") != (self.lineage is not None):
            raise ValueError(
                f"sample {self.id}: lineage must be present exactly when provenance is augmented"
            )
        img.setflags(write=False)
        object.__setattr__(self, "image", img)

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def height(self) -> int:
        return self.image.shape[0]


def _normalize_buckets(samples) -> dict[str, tuple[Sample, ...]]:
    if isinstance(samples, Mapping):
        unknown = [c for c in samples if c not in CLASS_LABELS]
        if unknown:
            raise ValueError(f"unknown class label: {unknown[0]}")
        return {c: tuple(samples.get(c, ())) for c in CLASS_LABELS}
    buckets: dict[str, list[Sample]] = {c: [] for c in CLASS_LABELS}
    for s in samples:
        buckets[s.label].append(s)
    return {c: tuple(v) for c, v in buckets.items()}


@dataclass(frozen=True, eq=False)
class Dataset:
    """Named, split-tagged collection of samples bucketed by class."""

    name: str
    split: str
    samples: Mapping[str, tuple[Sample, ...]]

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"dataset {self.name}: split must be one of {SPLITS}")
        buckets = _normalize_buckets(self.samples)
        seen: set[str] = set()
        for label, bucket in buckets.items():
            for s in bucket:
                if s.label != label:
                    raise ValueError(
                        f"dataset {self.name}: sample {s.id} (label {s.label}) in bucket {label}"
                    )
                if s.id in seen:
                    raise ValueError(f"dataset {self.name}: duplicate sample id {s.id}")
                seen.add(s.id)
        object.__setattr__(self, "samples", buckets)

    @classmethod
    def from_samples(cls, name: str, split: str, samples: Iterable[Sample]) -> "Dataset":
        return cls(name=name, split=split, samples=list(samples))

    def class_sizes(self) -> dict[str, int]:
        return {c: len(self.samples[c]) for c in CLASS_LABELS}

    @property
    def total(self) -> int:
        return sum(len(b) for b in self.samples.values())

    def iter_samples(self) -> Iterator[Sample]:
        for c in CLASS_LABELS:
            yield from self.samples[c]

    @cached_property
    def index(self) -> dict[str, Sample]:
        return {s.id: s for s in self.iter_samples()}

    def ids(self) -> frozenset[str]:
        return frozenset(self.index)

    def get(self, sample_id: str) -> Sample:
        try:
            return self.index[sample_id]
        except KeyError:
            raise ValueError(f"unknown sample id: {sample_id}") from None


@dataclass(frozen=True)
class CapsConfig:
    max_total: int = 10_000
    max_train: int = 9_000
    max_per_class_train: int = 900
    val_per_class: int = 100

    def __post_init__(self):
        if self.max_train > self.max_total:
            raise ValueError("max_train must not exceed max_total")


@dataclass(frozen=True)
class CapViolation:
    cap: str
    observed: int
    allowed: int
    subject: str | None = None

    def __str__(self) -> str:
        name = self.cap if self.subject is None else f"{self.cap}[{self.subject}]"
        return f"{name}: {self.observed} > {self.allowed}"


@dataclass(frozen=True)
class CapsReport:
    violations: tuple[CapViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [
                {"cap": v.cap, "observed": v.observed, "allowed": v.allowed, "subject": v.subject}
                for v in self.violations
            ],
        }


def validate_caps(
    train: Dataset, val: Dataset, caps: CapsConfig | None = None, mode: str = "even"
) -> CapsReport:
    """Check competition size limits. Violations are data, not errors.

    The per-class train cap applies only in ``even`` mode; the uneven
    pipeline redistributes class sizes and is bounded by ``max_train`` alone.
    """
    caps = caps or CapsConfig()
    if mode not in ("even", "uneven"):
        raise ValueError(f"mode must be even or uneven, got {mode!r}")
    violations: list[CapViolation] = []
    total = train.total + val.total
    if total > caps.max_total:
        violations.append(CapViolation("max_total", total, caps.max_total))
    if train.total > caps.max_train:
        violations.append(CapViolation("max_train", train.total, caps.max_train))
    if mode == "even":
        for c, n in train.class_sizes().items():
            if n > caps.max_per_class_train:
                violations.append(CapViolation("max_per_class_train", n, caps.max_per_class_train, c))
    for c, n in val.class_sizes().items():
        if n > caps.val_per_class:
            violations.append(CapViolation("val_per_class", n, caps.val_per_class, c))
    return CapsReport(tuple(violations))


def merge_datasets(a: Dataset, b: Dataset) -> Dataset:
    """Per-class concatenation, ``a``'s samples first."""
    if a.split != b.split:
        raise ValueError(f"cannot merge splits {a.split} and {b.split}")
    collisions = sorted(a.ids() & b.ids())
    if collisions:
        raise ValueError(f"id collision on merge: {', '.join(collisions)}")
    merged = {c: a.samples[c] + b.samples[c] for c in CLASS_LABELS}
    return Dataset(name=f"{a.name}+{b.name}", split=a.split, samples=merged)


def namespace_ids(d: Dataset, namespace: str | None = None) -> Dataset:
    """Prefix every sample's filename stem with a namespace to defuse merge collisions."""
    ns = namespace if namespace is not None else d.name
    renamed = []
    for s in d.iter_samples():
        stem = s.id.split("/", 1)[1] if "/" in s.id else s.id
        renamed.append(
            Sample(
                id=f"{s.label}/{ns}__{stem}",
                label=s.label,
                image=s.image,
                provenance=s.provenance,
                lineage=s.lineage,
            )
        )
    return Dataset.from_samples(d.name, d.split, renamed)


# --- hashing -------------------------------------------------------------


def pixel_hash(image: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(f"{image.shape[1]}x{image.shape[0]}:".encode())
    h.update(np.ascontiguousarray(image).tobytes())
    return h.hexdigest()


def content_hash(d: Dataset) -> str:
    pairs = sorted((s.id, pixel_hash(s.image)) for s in d.iter_samples())
    h = hashlib.sha256()
    h.update("\n".join(f"{i} {p}" for i, p in pairs).encode())
    return h.hexdigest()


# --- disk I/O ------------------------------------------------------------


def decode_png(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ValueError(f"undecodable image: {path}") from exc


def encode_png(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def load_dataset(root, *, name: str | None = None, split: str | None = None) -> Dataset:
    """Load a dataset tree; manifest wins over directory scanning when present."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root not found: {root}")
    manifest_path = root / MANIFEST_NAME
    if manifest_path.exists():
        return _load_from_manifest(root, manifest_path, name=name, split=split)
    return _load_bare(root, name=name, split=split)


def _load_bare(root: Path, *, name: str | None, split: str | None) -> Dataset:
    samples: list[Sample] = []
    for entry in sorted(root.iterdir(), key=lambda p: p.name):
        if not entry.is_dir():
            continue
        if entry.name not in CLASS_LABELS:
            raise ValueError(f"unknown class label: {entry.name}")
        for png in sorted(entry.glob("*.png"), key=lambda p: p.name):
            samples.append(
                Sample(id=f"{entry.name}/{png.stem}", label=entry.name, image=decode_png(png))
            )
    return Dataset.from_samples(name or root.name, split or "train", samples)


def _load_from_manifest(
    root: Path, manifest_path: Path, *, name: str | None, split: str | None
) -> Dataset:
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed manifest: {manifest_path}") from exc
    samples: list[Sample] = []
    for rec in manifest["records"]:
        path = root / rec["file"]
        if not path.exists():
            raise FileNotFoundError(f"missing file: {rec['file']}")
        lineage = Lineage.from_json(rec["lineage"]) if rec.get("lineage") else None
        samples.append(
            Sample(
                id=rec["id"],
                label=rec["class"],
                image=decode_png(path),
                provenance=rec.get("provenance", "raw"),
                lineage=lineage,
            )
        )
    d = Dataset.from_samples(
        name or manifest.get("name", root.name), split or manifest.get("split", "train"), samples
    )
    expected = manifest.get("content_hash")
    if expected and content_hash(d) != expected:
        raise ValueError(f"manifest content hash mismatch under {root}")
    return d


def export_dataset(d: Dataset, root, *, extra: Mapping | None = None) -> Path:
    """Write the class-per-directory tree plus manifest; returns the manifest path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    records = []
    taken: set[str] = set()
    for s in d.iter_samples():
        stem = s.id.split("/", 1)[1] if "/" in s.id else s.id
        rel = f"{s.label}/{stem}.png"
        if rel in taken:
            suffix = hashlib.sha256(s.id.encode()).hexdigest()[:8]
            rel = f"{s.label}/{stem}__{suffix}.png"
        taken.add(rel)
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        write_atomic(path, encode_png(s.image))
        records.append(
            {
                "id": s.id,
                "class": s.label,
                "file": rel,
                "provenance": s.provenance,
                "lineage": s.lineage.to_json() if s.lineage else None,
            }
        )
    manifest = {
        "name": d.name,
        "split": d.split,
        "content_hash": content_hash(d),
        "records": records,
    }
    if extra:
        manifest.update(extra)
    manifest_path = root / MANIFEST_NAME
    write_atomic(manifest_path, json.dumps(manifest, indent=2).encode())
    return manifest_path
