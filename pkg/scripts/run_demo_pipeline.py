#!/usr/bin/env python3
"""End-to-end desk-scale run of the curation pipeline on the glyph fixture.

Builds the fixture, checks caps, builds the augmented pool, resamples
duplicates away, reports per-class f1 from the simulated predictions, derives
uneven quotas and realizes them. Every stage is seeded; re-running with the
same arguments reproduces every artifact bit for bit.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))
sys.path.insert(0, str(Path(__file__).resolve().parent))

from make_fixture_dataset import build_split, simulate_predictions

from curator.augment import AugPolicy, build_pool, export_pool
from curator.dataset import CapsConfig, export_dataset, validate_caps
from curator.dedupe import default_threshold, find_duplicates
from curator.embedder import embed_samples
from curator.rebalance import classification_report, compute_quotas, favor_difficult
from curator.sampler import SamplerConfig, iterative_sample
from curator.seeds import derive_seed


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("demo-run"))
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--train-per-class", type=int, default=24)
    parser.add_argument("--pool-per-class", type=int, default=40)
    args = parser.parse_args()
    out = args.out

    print("== fixture ==")
    train = build_split("demo-train", "train", args.train_per_class, args.seed, 32, duplicate_fraction=0.2)
    val = build_split("demo-val", "val", 10, args.seed + 1, 32)
    export_dataset(train, out / "train")
    export_dataset(val, out / "val")
    print(f"train {train.total}, val {val.total}")

    print("== caps ==")
    report = validate_caps(train, val, CapsConfig())
    print("ok" if report.ok else "\n".join(str(v) for v in report.violations))

    print("== duplicates before ==")
    threshold = None
    before = 0
    for label, bucket in train.samples.items():
        matrix = embed_samples(bucket)
        cutoff = default_threshold(matrix) if len(bucket) >= 2 else 0.0
        threshold = cutoff if threshold is None else min(threshold, cutoff)
        before += len(find_duplicates(matrix, 1e-9).marked)
    print(f"{before} exact-duplicate samples across classes")

    print("== pool ==")
    policy = AugPolicy()
    pool = build_pool([train], policy, args.pool_per_class, derive_seed(args.seed, "pool"))
    export_pool(pool, out / "pool")
    print(f"pool {pool.total} augmented samples")

    print("== iterative resampling ==")
    cfg = SamplerConfig(
        max_sizes={c: n for c, n in train.class_sizes().items() if n},
        threshold=1e-9,
        seed=derive_seed(args.seed, "sampler"),
    )
    result = iterative_sample(train, pool, cfg)
    export_dataset(result.dataset, out / "resampled")
    result.trace.write_jsonl(out / "trace.jsonl")
    after = sum(
        len(find_duplicates(embed_samples(b), 1e-9).marked)
        for b in result.dataset.samples.values()
    )
    print(f"{len(result.trace.records)} replacement iterations, {after} exact duplicates remain")

    print("== classification report ==")
    preds = simulate_predictions(val, {"ii", "vii", "viii"}, 0.45, 0.05, args.seed + 2)
    class_report = classification_report(preds)
    print(class_report.to_text())

    print("== quotas ==")
    budget = result.dataset.total
    plan = compute_quotas(class_report, budget=budget, floor=max(1, args.train_per_class // 2))
    print(dict(plan.targets))

    print("== favoring difficult classes ==")
    uneven = favor_difficult(
        result.dataset, result.pool, plan, preds, val, seed=derive_seed(args.seed, "favor")
    )
    export_dataset(uneven, out / "uneven")
    print({c: n for c, n in uneven.class_sizes().items()})
    print(f"artifacts under {out}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
