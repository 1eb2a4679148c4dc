"""Acceptance criteria, one test per criterion with its stated tolerance and
time budget. Run with ``pytest tests/test_acceptance.py -v -s`` for the
per-criterion pass lines."""

import math
import time

import numpy as np
import pytest

from curator.augment import AugPolicy, AugPipeline, AugStep, apply_pipeline, barrel_map, build_pool
from curator.dataset import Dataset, Sample, merge_datasets, validate_caps
from curator.dedupe import find_duplicates
from curator.embedder import EMBED_DIM, EmbedderSpec, EmbeddingMatrix, embed_image, embed_samples
from curator.labels import CLASS_LABELS
from curator.rebalance import (
    ClassReport,
    ClassStats,
    PredictionRecord,
    classification_report,
    compute_quotas,
)
from curator.sampler import SamplerConfig, iterative_sample
from helpers import make_image, make_sampler_instance
from oracles import confusion_report_oracle, duplicate_groups_oracle, iterative_sampling_oracle


class Budget:
    def __init__(self, name, seconds):
        self.name = name
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        if exc_type is None:
            assert elapsed < self.seconds, f"{self.name}: {elapsed:.2f}s over budget {self.seconds}s"
            print(f"[PASS] {self.name} ({elapsed:.2f}s < {self.seconds}s)")
        else:
            print(f"[FAIL] {self.name}")
        return False


_SHARED_IMAGE = np.zeros((8, 8), dtype=np.uint8)


def bulk_dataset(sizes, name, split="train"):
    samples = [
        Sample(id=f"{label}/{name}-{k:04d}", label=label, image=_SHARED_IMAGE)
        for label, count in sizes.items()
        for k in range(count)
    ]
    return Dataset.from_samples(name, split, samples)


def test_c1_table1_composition_arithmetic():
    with Budget("C1 composition arithmetic: 250+78=328, 328+124=452 per class", 1.0):
        cleaned = bulk_dataset({c: 250 for c in CLASS_LABELS}, "cleaned")
        syn_first = bulk_dataset({c: 78 for c in CLASS_LABELS}, "synth-a")
        first = merge_datasets(cleaned, syn_first)
        assert first.class_sizes() == {c: 328 for c in CLASS_LABELS}
        syn_second = bulk_dataset({c: 124 for c in CLASS_LABELS}, "synth-b")
        second = merge_datasets(first, syn_second)
        assert second.class_sizes() == {c: 452 for c in CLASS_LABELS}


def test_c2_caps_suite():
    with Budget("C2 caps: 9000/1000 ok; 9001, 10001 total, 901/class all fail", 5.0):
        train = bulk_dataset({c: 900 for c in CLASS_LABELS}, "train")
        val = bulk_dataset({c: 100 for c in CLASS_LABELS}, "val", split="val")
        assert validate_caps(train, val).ok

        over_train = bulk_dataset(
            {c: 901 if c == "i" else 900 for c in CLASS_LABELS}, "over"
        )
        report = validate_caps(over_train, bulk_dataset({}, "empty", "val"), mode="uneven")
        assert "max_train: 9001 > 9000" in [str(v) for v in report.violations]

        over_val = bulk_dataset(
            {c: 101 if c == "i" else 100 for c in CLASS_LABELS}, "oval", split="val"
        )
        report = validate_caps(train, over_val)
        assert any(v.cap == "max_total" and v.observed == 10_001 for v in report.violations)

        lopsided = bulk_dataset(
            {c: 901 if c == "i" else 899 for c in CLASS_LABELS}, "lop"
        )
        report = validate_caps(lopsided, bulk_dataset({}, "empty", "val"), mode="even")
        assert [str(v) for v in report.violations] == ["max_per_class_train[i]: 901 > 900"]
        assert validate_caps(lopsided, bulk_dataset({}, "e2", "val"), mode="uneven").ok


def test_c3_iterative_sampling_property_suite():
    with Budget("C3 replacement loop: 200 random instances vs transliteration oracle", 10.0):
        for seed in range(1000, 1200):
            d, pool, max_sizes, threshold, iterations = make_sampler_instance(seed)
            cfg = SamplerConfig(
                max_sizes=max_sizes, threshold=threshold, iterations=iterations, seed=seed
            )
            result = iterative_sample(d, pool, cfg)

            # termination within the iteration budget
            for label in CLASS_LABELS:
                assert len(result.trace.per_class(label)) <= cfg.iterations

            # exact class size absent shortfall
            for label, cap in max_sizes.items():
                records = result.trace.per_class(label)
                if not any(r.shortfall for r in records):
                    assert len(result.dataset.samples[label]) == cap

            # ended via empty duplicate set -> no pair within threshold remains
            for label in max_sizes:
                records = result.trace.per_class(label)
                if len(records) < cfg.iterations:
                    matrix = embed_samples(list(result.dataset.samples[label]), cfg.embedder)
                    assert find_duplicates(matrix, threshold, cfg.metric).marked == frozenset()

            # output dataset and leftover pool are disjoint
            assert not result.dataset.ids() & result.pool.ids()

            # determinism under a fixed seed
            again = iterative_sample(d, pool, cfg)
            assert [s.id for s in again.dataset.iter_samples()] == [
                s.id for s in result.dataset.iter_samples()
            ]
            assert again.trace == result.trace

            # full-run equivalence with the step-by-step oracle
            exp_buckets, exp_pools, exp_trace = iterative_sampling_oracle(d, pool, cfg)
            for label in CLASS_LABELS:
                assert [s.id for s in result.dataset.samples[label]] == exp_buckets.get(label, [])
                assert [s.id for s in result.pool.samples[label]] == exp_pools.get(label, [])
            got = [
                (r.label, r.iteration, r.duplicates_found, r.removed, r.added, r.pool_remaining, r.shortfall)
                for r in result.trace.records
            ]
            assert got == exp_trace


def _fast_pair_distance(a, b):
    diff = a - b
    return math.sqrt(float((diff * diff).sum()))


def test_c4_dedupe_brute_force_oracle():
    with Budget("C4 dedupe: 100 random matrices match brute-force union-find exactly", 5.0):
        rng = np.random.default_rng(4242)
        for trial in range(100):
            n = int(rng.integers(0, 65))
            rows = rng.uniform(-1, 1, size=(n, EMBED_DIM))
            for k in range(0, n - 1, 4):
                rows[k + 1] = rows[k]  # planted duplicate pairs
            ids = tuple(f"s{k:03d}" for k in range(n))
            threshold = float(rng.uniform(0, 1.2))
            report = find_duplicates(EmbeddingMatrix(ids=ids, rows=rows), threshold)
            got = {g.representative: frozenset(g.duplicates) for g in report.groups}
            expected, marked = duplicate_groups_oracle(
                ids, list(rows), threshold, pair_fn=_fast_pair_distance
            )
            assert got == expected, f"trial {trial}"
            assert report.marked == marked


def test_c5_classification_report_oracle():
    with Budget("C5 report: worked example exact; 100 random sets within 1e-12", 1.0):
        preds = [
            PredictionRecord("s1", "i", "i"),
            PredictionRecord("s2", "i", "v"),
            PredictionRecord("s3", "v", "v"),
            PredictionRecord("s4", "x", "x"),
        ]
        report = classification_report(preds)
        assert report.per_class["i"].precision == 1.0
        assert report.per_class["i"].recall == 0.5
        assert report.per_class["i"].f1 == 2 / 3
        assert report.per_class["v"].precision == 0.5
        assert report.per_class["v"].recall == 1.0
        assert report.per_class["v"].f1 == 2 / 3
        assert report.per_class["x"] == ClassStats(1.0, 1.0, 1.0, 1)
        assert report.accuracy == 0.75

        rng = np.random.default_rng(555)
        for _ in range(100):
            n = int(rng.integers(1, 201))
            random_preds = [
                PredictionRecord(
                    f"s{k}",
                    CLASS_LABELS[int(rng.integers(10))],
                    CLASS_LABELS[int(rng.integers(10))],
                )
                for k in range(n)
            ]
            got = classification_report(random_preds)
            expected, accuracy = confusion_report_oracle(random_preds)
            assert abs(got.accuracy - accuracy) < 1e-12
            assert set(got.per_class) == set(expected)
            for c, (precision, recall, f1, support) in expected.items():
                stats = got.per_class[c]
                assert abs(stats.precision - precision) < 1e-12
                assert abs(stats.recall - recall) < 1e-12
                assert abs(stats.f1 - f1) < 1e-12
                assert stats.support == support


def test_c6_quota_suite():
    with Budget("C6 quotas: exact budget, monotone in f1, 900x10, {167,833}", 1.0):
        rng = np.random.default_rng(66)
        for _ in range(100):
            f1s = {c: float(rng.uniform(0, 1)) for c in CLASS_LABELS}
            budget = int(rng.integers(500, 20_000))
            floor = int(rng.integers(0, 20))
            report = ClassReport(
                per_class={c: ClassStats(1.0, 1.0, f1, 10) for c, f1 in f1s.items()},
                accuracy=1.0,
            )
            plan = compute_quotas(report, budget=budget, floor=floor)
            assert sum(plan.targets.values()) == budget
            for a in CLASS_LABELS:
                for b in CLASS_LABELS:
                    if f1s[a] <= f1s[b]:
                        assert plan.targets[a] >= plan.targets[b]

        symmetric = ClassReport(
            per_class={c: ClassStats(1.0, 1.0, 0.5, 10) for c in CLASS_LABELS}, accuracy=1.0
        )
        assert compute_quotas(symmetric, budget=9000, floor=0).targets == {
            c: 900 for c in CLASS_LABELS
        }

        toy = ClassReport(
            per_class={"i": ClassStats(1, 1, 1.0, 10), "ii": ClassStats(1, 1, 0.5, 10)},
            accuracy=1.0,
        )
        assert compute_quotas(toy, budget=1000, floor=100, epsilon=0.05).targets == {
            "i": 167,
            "ii": 833,
        }


def test_c7_augmentation_suite():
    with Budget("C7 augment: involutions, barrel identity, r-doubling, policy, seeds", 10.0):
        for seed in range(8):
            img = make_image(seed, 16 + seed, 24 - seed)
            for kind in ("hflip", "vflip"):
                double = AugPipeline((AugStep(kind), AugStep(kind)), seed=seed)
                assert np.array_equal(apply_pipeline(img, double), img)
            identity = AugPipeline(
                (AugStep("barrel", {"A": 0, "B": 0, "C": 0, "D": 1}),), seed=seed
            )
            assert np.array_equal(apply_pipeline(img, identity), img)

        sx, sy = barrel_map(
            0.25, 0.0, (0.0, 0.0, 0.0, 2.0), center=(0.0, 0.0), half_min_dimension=1.0
        )
        assert abs(float(sx) - 0.5) < 1e-9 and abs(float(sy)) < 1e-9

        # policy safety: hflip denied for iv and vi, exhaustive lineage scan
        deny_policy = AugPolicy(deny={"iv": frozenset({"hflip"}), "vi": frozenset({"hflip"})})
        bases = [
            Dataset.from_samples(
                "base",
                "train",
                [
                    Sample(id=f"{c}/b{k}", label=c, image=make_image(1_000 + k))
                    for c in CLASS_LABELS
                    for k in range(2)
                ],
            )
        ]
        pool = build_pool(bases, deny_policy, target_per_class=30, seed=77)
        violations = [
            s.id
            for s in pool.iter_samples()
            if s.label in ("iv", "vi")
            and "hflip" in {step["kind"] for step in s.lineage.pipeline}
        ]
        assert violations == []

        again = build_pool(bases, deny_policy, target_per_class=30, seed=77)
        assert [s.id for s in again.iter_samples()] == [s.id for s in pool.iter_samples()]
        for a, b in zip(pool.iter_samples(), again.iter_samples()):
            assert np.array_equal(a.image, b.image) and a.lineage == b.lineage


def test_c8_baseline_embedder():
    with Budget("C8 embedder: all-255 16x16 -> 1/16 vector; outputs 256 wide", 1.0):
        vec = embed_image(np.full((16, 16), 255, dtype=np.uint8))
        assert vec.shape == (EMBED_DIM,)
        assert np.max(np.abs(vec - 1.0 / 16.0)) < 1e-9
        for shape in [(8, 8), (16, 16), (29, 13), (64, 48)]:
            assert embed_image(make_image(9, *shape)).shape == (EMBED_DIM,)
        assert embed_image(make_image(9), EmbedderSpec(l2_normalize=False)).shape == (EMBED_DIM,)
