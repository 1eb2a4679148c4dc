import numpy as np

from curator.augment import Pool
from curator.dataset import Dataset, Lineage, Sample
from curator.labels import CLASS_LABELS


def make_image(seed: int, h: int = 16, w: int = 16) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, (h, w), dtype=np.uint8)


def make_dataset(sizes, name="fixture", split="train", seed=0, h=16, w=16) -> Dataset:
    """One dataset with ``sizes[label]`` random distinct images per class."""
    samples = []
    for label, count in sizes.items():
        for k in range(count):
            samples.append(
                Sample(
                    id=f"{label}/{name}-{k:03d}",
                    label=label,
                    image=make_image(seed * 100_003 + CLASS_LABELS.index(label) * 1009 + k, h, w),
                )
            )
    return Dataset.from_samples(name, split, samples)


def make_sampler_instance(seed: int):
    """Random replacement-regime instance: planted duplicates, pool that can
    itself contain duplicates of train images, per-class targets equal to the
    starting sizes."""
    rng = np.random.default_rng(seed)
    labels = [CLASS_LABELS[int(i)] for i in rng.choice(10, size=int(rng.integers(1, 4)), replace=False)]
    samples, pool_samples = [], []
    max_sizes = {}
    for label in labels:
        n = int(rng.integers(2, 21))
        palette = [make_image(int(rng.integers(0, 2**31))) for _ in range(max(1, n // 2))]
        for k in range(n):
            img = palette[int(rng.integers(len(palette)))]
            samples.append(Sample(id=f"{label}/d{k:03d}", label=label, image=img))
        max_sizes[label] = n
        for k in range(int(rng.integers(0, 11))):
            if rng.uniform() < 0.3:
                img = palette[int(rng.integers(len(palette)))]
            else:
                img = make_image(int(rng.integers(0, 2**31)))
            pool_samples.append(
                Sample(
                    id=f"{label}/p{k:03d}",
                    label=label,
                    image=img,
                    provenance="augmented",
                    lineage=Lineage(parent_id=f"{label}/d000", pipeline=({"kind": "hflip", "params": {}, "seed": 0},)),
                )
            )
    dataset = Dataset.from_samples(f"inst{seed}", "train", samples)
    pool = Pool(samples=_bucketize(pool_samples))
    threshold = float(rng.choice([0.0, 1e-9, rng.uniform(0.05, 0.4)]))
    iterations = int(rng.integers(0, 11))
    return dataset, pool, max_sizes, threshold, iterations


def _bucketize(samples):
    buckets = {c: [] for c in CLASS_LABELS}
    for s in samples:
        buckets[s.label].append(s)
    return {c: tuple(v) for c, v in buckets.items()}


def make_pool_samples(label, count, seed, prefix="pooled", h=16, w=16):
    return tuple(
        Sample(
            id=f"{label}/{prefix}-{k:03d}",
            label=label,
            image=make_image(seed * 7919 + CLASS_LABELS.index(label) * 31 + k + 500_000, h, w),
            provenance="augmented",
            lineage=Lineage(
                parent_id=f"{label}/base",
                pipeline=({"kind": "noise", "params": {"s": 3.0}, "seed": seed},),
            ),
        )
        for k in range(count)
    )
