"""Iterative duplicate replacement, class by class.

Each class runs its own loop: embed the current samples, find near-duplicate
groups, drop every non-representative, top back up to the class size target
with uniform draws from the augmented pool, re-embed, repeat. The loop runs
while duplicates remain AND iteration budget is left; the verbatim OR variant
(keep looping while either holds) never stops early and can spin forever on a
stubborn duplicate cluster, so it sits behind ``or_semantics`` with a hard
iteration cap. Re-embedding after each top-up is required for correctness:
fresh pool samples can themselves collide, and a stale embedding matrix would
never see them.

Pool draws are per-class seeded, so classes can be processed in any order
(or concurrently) with identical results.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .augment import Pool
from .dataset import Dataset, Sample
from .dedupe import default_threshold, find_duplicates
from .embedder import EMBED_DIM, EmbedderSpec, EmbeddingMatrix, embed_image, embed_samples
from .labels import CLASS_LABELS, class_index
from .seeds import derive_rng


@dataclass(frozen=True)
class SamplerConfig:
    max_sizes: Mapping[str, int]
    iterations: int = 10
    metric: str = "euclidean"
    threshold: float | str = "auto"
    seed: int = 0
    embedder: EmbedderSpec = EmbedderSpec()
    or_semantics: bool = False
    hard_cap: int = 1000

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        sizes = {k: int(v) for k, v in self.max_sizes.items()}
        for label, size in sizes.items():
            class_index(label)
            if size < 1:
                raise ValueError(f"max size for class {label} must be >= 1")
        object.__setattr__(self, "max_sizes", sizes)
        if self.threshold != "auto" and float(self.threshold) < 0:
            raise ValueError("threshold must be >= 0 or 'auto'")
        if self.hard_cap < 1:
            raise ValueError("hard_cap must be >= 1")


@dataclass(frozen=True)
class IterationRecord:
    label: str
    iteration: int
    duplicates_found: int
    removed: int
    added: int
    pool_remaining: int
    shortfall: bool

    def to_json(self) -> dict:
        return {
            "class": self.label,
            "iteration": self.iteration,
            "duplicates_found": self.duplicates_found,
            "removed": self.removed,
            "added": self.added,
            "pool_remaining": self.pool_remaining,
            "shortfall": self.shortfall,
        }


@dataclass(frozen=True)
class SamplingTrace:
    records: tuple[IterationRecord, ...] = ()

    def per_class(self, label: str) -> tuple[IterationRecord, ...]:
        return tuple(r for r in self.records if r.label == label)

    def iter_jsonl(self) -> Iterator[str]:
        for r in self.records:
            yield json.dumps(r.to_json())

    def write_jsonl(self, path) -> Path:
        path = Path(path)
        path.write_text("".join(line + "\n" for line in self.iter_jsonl()))
        return path


@dataclass(frozen=True)
class SamplingResult:
    dataset: Dataset
    pool: Pool
    trace: SamplingTrace


class _EmbeddingCache:
    """Per-run embedding memo; sample images are immutable so ids suffice."""

    def __init__(self, spec: EmbedderSpec):
        self.spec = spec
        self._baseline: dict[str, np.ndarray] = {}

    def matrix(self, samples: list[Sample]) -> EmbeddingMatrix:
        if self.spec.kind != "baseline":
            return embed_samples(samples, self.spec)
        rows = []
        for s in samples:
            vec = self._baseline.get(s.id)
            if vec is None:
                vec = embed_image(s.image, self.spec)
                self._baseline[s.id] = vec
            rows.append(vec)
        return EmbeddingMatrix(
            ids=tuple(s.id for s in samples),
            rows=np.stack(rows) if rows else np.zeros((0, EMBED_DIM)),
        )


def _resolve_threshold(cfg: SamplerConfig, matrix: EmbeddingMatrix) -> float:
    if cfg.threshold == "auto":
        return default_threshold(matrix, cfg.metric) if len(matrix) >= 2 else 0.0
    return float(cfg.threshold)


def iterative_sample(d: Dataset, p: Pool, cfg: SamplerConfig) -> SamplingResult:
    """Replace near-duplicates in each class with fresh pool draws."""
    if d.split != "train":
        raise ValueError(f"iterative sampling expects a train split, got {d.split}")
    overlap = d.ids() & p.ids()
    if overlap:
        raise ValueError(f"pool ids overlap dataset ids: {', '.join(sorted(overlap)[:5])}")
    for label, bucket in d.samples.items():
        if bucket and label not in cfg.max_sizes:
            raise ValueError(f"class {label} missing from max_sizes")

    cache = _EmbeddingCache(cfg.embedder)
    new_buckets: dict[str, tuple[Sample, ...]] = {}
    new_pool: dict[str, tuple[Sample, ...]] = {}
    records: list[IterationRecord] = []

    for ci, label in enumerate(CLASS_LABELS):
        samples = list(d.samples[label])
        pool_c = list(p.samples[label])
        if not samples and label not in cfg.max_sizes:
            new_buckets[label] = ()
            new_pool[label] = tuple(pool_c)
            continue
        max_size = cfg.max_sizes[label]
        rng = derive_rng(cfg.seed, "sampler", ci)
        matrix = cache.matrix(samples)
        threshold = _resolve_threshold(cfg, matrix)
        report = find_duplicates(matrix, threshold, cfg.metric)
        n = 1
        while _keep_going(bool(report.groups), n, cfg):
            marked = report.marked
            samples = [s for s in samples if s.id not in marked]
            missing = max(0, max_size - len(samples))
            take = min(missing, len(pool_c))
            if take > 0:
                chosen_idx = rng.choice(len(pool_c), size=take, replace=False)
                chosen_set = set(int(j) for j in chosen_idx)
                samples.extend(pool_c[int(j)] for j in chosen_idx)
                pool_c = [s for j, s in enumerate(pool_c) if j not in chosen_set]
            records.append(
                IterationRecord(
                    label=label,
                    iteration=n,
                    duplicates_found=len(marked),
                    removed=len(marked),
                    added=take,
                    pool_remaining=len(pool_c),
                    shortfall=take < missing,
                )
            )
            matrix = cache.matrix(samples)
            report = find_duplicates(matrix, threshold, cfg.metric)
            n += 1
        new_buckets[label] = tuple(samples)
        new_pool[label] = tuple(pool_c)

    result = Dataset(name=f"{d.name}-resampled", split=d.split, samples=new_buckets)
    remaining = Pool(samples=new_pool, shortfalls=p.shortfalls)
    return SamplingResult(dataset=result, pool=remaining, trace=SamplingTrace(tuple(records)))


def _keep_going(has_duplicates: bool, n: int, cfg: SamplerConfig) -> bool:
    if cfg.or_semantics:
        return (has_duplicates or n <= cfg.iterations) and n <= cfg.hard_cap
    return has_duplicates and n <= cfg.iterations
