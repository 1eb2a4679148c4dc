#!/usr/bin/env python3
"""Generate a synthetic Roman-numeral glyph dataset for desk-scale runs.

Draws jittered stroke glyphs (dark ink on light paper) for the ten classes,
writes train/ and val/ trees, optionally plants exact duplicates in train so
the dedupe and resampling stages have something to chew on, and simulates a
predictions CSV with mistakes concentrated on configurable difficult classes.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from curator.dataset import Dataset, Sample, export_dataset
from curator.labels import CLASS_LABELS
from curator.rebalance import PredictionRecord, write_predictions_csv

INK = 40
PAPER = 230


def draw_line(canvas, x0, y0, x1, y1, thickness=1.6):
    h, w = canvas.shape
    steps = int(max(abs(x1 - x0), abs(y1 - y0)) * 3) + 1
    ys, xs = np.mgrid[0:h, 0:w]
    for t in np.linspace(0.0, 1.0, steps):
        px, py = x0 + (x1 - x0) * t, y0 + (y1 - y0) * t
        mask = (xs - px) ** 2 + (ys - py) ** 2 <= thickness**2
        canvas[mask] = INK


GLYPH_STROKES = {
    "i": [((0.5, 0.15), (0.5, 0.85))],
    "ii": [((0.35, 0.15), (0.35, 0.85)), ((0.65, 0.15), (0.65, 0.85))],
    "iii": [((0.25, 0.15), (0.25, 0.85)), ((0.5, 0.15), (0.5, 0.85)), ((0.75, 0.15), (0.75, 0.85))],
    "iv": [((0.25, 0.15), (0.25, 0.85)), ((0.45, 0.15), (0.6, 0.85)), ((0.75, 0.15), (0.6, 0.85))],
    "v": [((0.3, 0.15), (0.5, 0.85)), ((0.7, 0.15), (0.5, 0.85))],
    "vi": [((0.2, 0.15), (0.4, 0.85)), ((0.6, 0.15), (0.4, 0.85)), ((0.75, 0.15), (0.75, 0.85))],
    "vii": [
        ((0.15, 0.15), (0.35, 0.85)),
        ((0.55, 0.15), (0.35, 0.85)),
        ((0.65, 0.15), (0.65, 0.85)),
        ((0.85, 0.15), (0.85, 0.85)),
    ],
    "viii": [
        ((0.1, 0.15), (0.28, 0.85)),
        ((0.46, 0.15), (0.28, 0.85)),
        ((0.55, 0.15), (0.55, 0.85)),
        ((0.7, 0.15), (0.7, 0.85)),
        ((0.85, 0.15), (0.85, 0.85)),
    ],
    "ix": [((0.2, 0.15), (0.2, 0.85)), ((0.45, 0.15), (0.85, 0.85)), ((0.85, 0.15), (0.45, 0.85))],
    "x": [((0.25, 0.15), (0.75, 0.85)), ((0.75, 0.15), (0.25, 0.85))],
}


def render_glyph(label: str, rng: np.random.Generator, size: int = 32) -> np.ndarray:
    canvas = np.full((size, size), PAPER, dtype=np.uint8)
    jx, jy = rng.uniform(-0.05, 0.05, size=2)
    scale = rng.uniform(0.85, 1.05)
    thickness = rng.uniform(1.2, 2.0)
    for (x0, y0), (x1, y1) in GLYPH_STROKES[label]:
        sx0 = (0.5 + (x0 - 0.5) * scale + jx) * (size - 1)
        sy0 = (0.5 + (y0 - 0.5) * scale + jy) * (size - 1)
        sx1 = (0.5 + (x1 - 0.5) * scale + jx) * (size - 1)
        sy1 = (0.5 + (y1 - 0.5) * scale + jy) * (size - 1)
        draw_line(canvas, sx0, sy0, sx1, sy1, thickness)
    noise = rng.normal(0, 6, size=canvas.shape)
    return np.clip(canvas.astype(np.float64) + noise, 0, 255).astype(np.uint8)


def build_split(name, split, per_class, seed, size, duplicate_fraction=0.0):
    rng = np.random.default_rng(seed)
    samples = []
    for label in CLASS_LABELS:
        images = []
        for k in range(per_class):
            if images and rng.uniform() < duplicate_fraction:
                img = images[int(rng.integers(len(images)))].copy()
            else:
                img = render_glyph(label, rng, size)
            images.append(img)
            samples.append(Sample(id=f"{label}/{split}-{k:04d}", label=label, image=img))
    return Dataset.from_samples(name, split, samples)


def simulate_predictions(val: Dataset, difficult, error_rate, easy_error_rate, seed):
    rng = np.random.default_rng(seed)
    preds = []
    for s in val.iter_samples():
        rate = error_rate if s.label in difficult else easy_error_rate
        predicted = s.label
        if rng.uniform() < rate:
            others = [c for c in CLASS_LABELS if c != s.label]
            predicted = others[int(rng.integers(len(others)))]
        preds.append(PredictionRecord(s.id, s.label, predicted))
    return preds


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("fixture"))
    parser.add_argument("--train-per-class", type=int, default=30)
    parser.add_argument("--val-per-class", type=int, default=10)
    parser.add_argument("--size", type=int, default=32, help="Image side in pixels.")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument(
        "--duplicate-fraction", type=float, default=0.15,
        help="Chance a train image is an exact copy of an earlier one.",
    )
    parser.add_argument("--difficult", nargs="*", default=["ii", "vii", "viii"])
    parser.add_argument("--error-rate", type=float, default=0.45)
    parser.add_argument("--easy-error-rate", type=float, default=0.05)
    args = parser.parse_args()

    train = build_split(
        "fixture-train", "train", args.train_per_class, args.seed, args.size,
        duplicate_fraction=args.duplicate_fraction,
    )
    val = build_split("fixture-val", "val", args.val_per_class, args.seed + 1, args.size)
    export_dataset(train, args.out / "train")
    export_dataset(val, args.out / "val")
    preds = simulate_predictions(
        val, set(args.difficult), args.error_rate, args.easy_error_rate, args.seed + 2
    )
    write_predictions_csv(preds, args.out / "predictions.csv")
    print(f"train: {train.total} samples -> {args.out / 'train'}")
    print(f"val:   {val.total} samples -> {args.out / 'val'}")
    print(f"preds: {len(preds)} rows -> {args.out / 'predictions.csv'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
