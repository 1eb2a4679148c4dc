"""Deterministic image augmentation, pool building, and validation padding.

Every transform is a pure function of (image, parameters, seed). Stochastic
steps (shuffle_pixels, noise) draw from a counter-based generator keyed by
(pipeline seed, step index) only, so a pipeline replays byte-identically no
matter where or when it runs. Geometry steps resample with inverse-mapped
bilinear interpolation and fill out-of-canvas pixels with the image's modal
border value, which works for both dark-on-light and light-on-dark glyphs.

Flips are policy-guarded per class: a mirrored glyph can turn into a
different class entirely, so e.g. "iv" and "vi" deny hflip by default.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .dataset import Dataset, Lineage, Sample, _normalize_buckets
from .labels import CLASS_LABELS, check_label
from .seeds import derive_rng, derive_seed

AUG_KINDS = (
    "hflip",
    "vflip",
    "shuffle_pixels",
    "pixelize",
    "rotate",
    "blur",
    "aspect_ratio",
    "noise",
    "barrel",
    "barrel_inverse",
)

_STOCHASTIC_KINDS = frozenset({"shuffle_pixels", "noise"})

# Mirror images of asymmetric numerals are unrecognizable or land in another
# class; symmetric strokes (i, ii, iii, x) survive flips.
DEFAULT_DENY = {
    "iv": frozenset({"hflip", "vflip"}),
    "v": frozenset({"vflip"}),
    "vi": frozenset({"hflip", "vflip"}),
    "vii": frozenset({"vflip"}),
    "ix": frozenset({"hflip", "vflip"}),
}

# Sampling ranges per kind; chosen to keep small glyphs recognizable.
DEFAULT_PARAM_RANGES: dict[str, dict[str, tuple[float, float]]] = {
    "shuffle_pixels": {"p": (0.05, 0.25)},
    "pixelize": {"k": (2, 4)},
    "rotate": {"theta": (-25.0, 25.0)},
    "blur": {"sigma": (0.4, 1.6)},
    "aspect_ratio": {"a": (0.75, 4.0 / 3.0)},
    "noise": {"s": (2.0, 12.0)},
    "barrel": {"strength": (-0.18, 0.18)},
    "barrel_inverse": {"strength": (-0.18, 0.18)},
}


def _validate_params(kind: str, params: Mapping[str, float]) -> dict[str, float]:
    if kind not in AUG_KINDS:
        raise ValueError(f"unknown augmentation kind: {kind}")
    p = {k: float(v) for k, v in params.items()}
    if any(not math.isfinite(v) for v in p.values()):
        raise ValueError(f"{kind}: non-finite parameter")
    if kind in ("hflip", "vflip"):
        if p:
            raise ValueError(f"{kind} takes no parameters")
        return p
    if kind == "shuffle_pixels":
        if not 0 < p["p"] <= 1:
            raise ValueError(f"shuffle_pixels: fraction p must be in (0, 1], got {p['p']}")
    elif kind == "pixelize":
        if p["k"] != int(p["k"]) or p["k"] < 2:
            raise ValueError(f"pixelize: block size k must be an integer >= 2, got {p['k']}")
    elif kind == "rotate":
        p["theta"]  # any finite angle
    elif kind == "blur":
        if p["sigma"] <= 0:
            raise ValueError(f"blur: sigma must be > 0, got {p['sigma']}")
    elif kind == "aspect_ratio":
        if not 0.5 <= p["a"] <= 2.0:
            raise ValueError(f"aspect_ratio: width factor a must be in [0.5, 2], got {p['a']}")
    elif kind == "noise":
        if p["s"] < 0:
            raise ValueError(f"noise: stddev s must be >= 0, got {p['s']}")
    else:  # barrel, barrel_inverse
        for name in ("A", "B", "C", "D"):
            p.setdefault(name, 0.0)
    return p


@dataclass(frozen=True)
class AugStep:
    kind: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", _validate_params(self.kind, self.params))


@dataclass(frozen=True)
class AugPipeline:
    steps: tuple[AugStep, ...]
    seed: int = 0

    def __post_init__(self):
        if not self.steps:
            raise ValueError("pipeline needs at least one step")
        object.__setattr__(self, "steps", tuple(self.steps))

    def kinds(self) -> frozenset[str]:
        return frozenset(s.kind for s in self.steps)


def pipeline_descriptor(pipe: AugPipeline) -> tuple[dict, ...]:
    """JSON-ready lineage records, one per step."""
    return tuple(
        {"kind": s.kind, "params": dict(s.params), "seed": pipe.seed} for s in pipe.steps
    )


def parse_pipeline(descriptor: Sequence[Mapping]) -> AugPipeline:
    steps = tuple(AugStep(rec["kind"], rec.get("params", {})) for rec in descriptor)
    seed = int(descriptor[0].get("seed", 0)) if descriptor else 0
    return AugPipeline(steps=steps, seed=seed)


@dataclass(frozen=True)
class AugPolicy:
    deny: Mapping[str, frozenset[str]] = field(default_factory=lambda: dict(DEFAULT_DENY))
    params: Mapping[str, Mapping[str, tuple[float, float]]] = field(
        default_factory=lambda: DEFAULT_PARAM_RANGES
    )
    min_steps: int = 1
    max_steps: int = 3

    def __post_init__(self):
        deny = {check_label(c): frozenset(kinds) for c, kinds in self.deny.items()}
        for c, kinds in deny.items():
            for k in kinds:
                if k not in AUG_KINDS:
                    raise ValueError(f"deny list for {c}: unknown kind {k}")
        object.__setattr__(self, "deny", deny)
        if not 1 <= self.min_steps <= self.max_steps:
            raise ValueError("composition bounds need 1 <= min_steps <= max_steps")

    def denied_for(self, label: str) -> frozenset[str]:
        return self.deny.get(label, frozenset())

    def admits(self, pipe: AugPipeline, label: str) -> bool:
        return not (pipe.kinds() & self.denied_for(label))

    def to_json(self) -> dict:
        return {
            "deny": {c: sorted(k) for c, k in self.deny.items()},
            "params": {k: {f: list(r) for f, r in v.items()} for k, v in self.params.items()},
            "composition": {"min_steps": self.min_steps, "max_steps": self.max_steps},
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "AugPolicy":
        params = {
            k: {f: (float(r[0]), float(r[1])) for f, r in v.items()}
            for k, v in data.get("params", DEFAULT_PARAM_RANGES).items()
        }
        comp = data.get("composition", {})
        return cls(
            deny={c: frozenset(k) for c, k in data.get("deny", {}).items()},
            params=params,
            min_steps=int(comp.get("min_steps", 1)),
            max_steps=int(comp.get("max_steps", 3)),
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=2))
        return path

    @classmethod
    def load(cls, path) -> "AugPolicy":
        return cls.from_json(json.loads(Path(path).read_text()))


# --- resampling machinery --------------------------------------------------


def modal_border_value(image: np.ndarray) -> int:
    """Most frequent value on the outer one-pixel border (ties -> smallest)."""
    border = np.concatenate(
        [image[0, :], image[-1, :], image[1:-1, 0], image[1:-1, -1]]
    )
    return int(np.bincount(border, minlength=256).argmax())


def _bilinear_sample(image: np.ndarray, sx: np.ndarray, sy: np.ndarray, fill: int) -> np.ndarray:
    """Sample image at float source coords; non-finite or out-of-bounds -> fill."""
    h, w = image.shape
    out = np.full(sx.shape, float(fill))
    valid = (
        np.isfinite(sx) & np.isfinite(sy) & (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
    )
    if np.any(valid):
        vx, vy = sx[valid], sy[valid]
        x0 = np.floor(vx).astype(int)
        y0 = np.floor(vy).astype(int)
        x1 = np.minimum(x0 + 1, w - 1)
        y1 = np.minimum(y0 + 1, h - 1)
        fx, fy = vx - x0, vy - y0
        img = image.astype(np.float64)
        out[valid] = (
            img[y0, x0] * (1 - fx) * (1 - fy)
            + img[y0, x1] * fx * (1 - fy)
            + img[y1, x0] * (1 - fx) * fy
            + img[y1, x1] * fx * fy
        )
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def barrel_map(
    x,
    y,
    coeffs: tuple[float, float, float, float],
    center: tuple[float, float],
    half_min_dimension: float,
    inverse: bool = False,
):
    """Radial source coords for barrel distortion about ``center``.

    With r the radius of (x, y) normalized by ``half_min_dimension``, the
    source radius is r * (A r^3 + B r^2 + C r + D) for barrel and
    r / (A r^3 + B r^2 + C r + D) for the inverse form. Where the inverse
    polynomial hits zero the source is NaN, which samplers render as fill.
    """
    if half_min_dimension <= 0:
        raise ValueError("half_min_dimension must be > 0")
    a, b, c, d = coeffs
    cx, cy = center
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx, dy = x - cx, y - cy
    r = np.hypot(dx, dy) / half_min_dimension
    poly = ((a * r + b) * r + c) * r + d
    if inverse:
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(poly != 0, 1.0 / poly, np.nan)
    else:
        scale = poly
    sx = np.where(r == 0, cx, cx + dx * scale)
    sy = np.where(r == 0, cy, cy + dy * scale)
    return sx, sy


def _dest_grid(shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    return xs.astype(np.float64), ys.astype(np.float64)


# --- primitive transforms ---------------------------------------------------


def _apply_hflip(img, params, rng):
    return img[:, ::-1].copy()


def _apply_vflip(img, params, rng):
    return img[::-1, :].copy()


def _apply_shuffle_pixels(img, params, rng):
    flat = img.reshape(-1).copy()
    k = int(params["p"] * flat.size)
    if k >= 2:
        idx = rng.choice(flat.size, size=k, replace=False)
        flat[idx] = flat[idx][rng.permutation(k)]
    return flat.reshape(img.shape)


def _apply_pixelize(img, params, rng):
    k = int(params["k"])
    h, w = img.shape
    row_starts = np.arange(0, h, k)
    col_starts = np.arange(0, w, k)
    sums = np.add.reduceat(np.add.reduceat(img.astype(np.float64), row_starts, 0), col_starts, 1)
    row_sizes = np.diff(np.append(row_starts, h))
    col_sizes = np.diff(np.append(col_starts, w))
    means = np.rint(sums / np.outer(row_sizes, col_sizes))
    blocks = np.repeat(np.repeat(means, row_sizes, axis=0), col_sizes, axis=1)
    return blocks.astype(np.uint8)


def _apply_rotate(img, params, rng):
    theta = math.radians(params["theta"])
    h, w = img.shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    xs, ys = _dest_grid(img.shape)
    dx, dy = xs - cx, ys - cy
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    sx = cx + cos_t * dx + sin_t * dy
    sy = cy - sin_t * dx + cos_t * dy
    return _bilinear_sample(img, sx, sy, modal_border_value(img))


def _apply_blur(img, params, rng):
    blurred = gaussian_filter(img.astype(np.float64), sigma=params["sigma"], mode="nearest")
    return np.clip(np.rint(blurred), 0, 255).astype(np.uint8)


def _apply_aspect_ratio(img, params, rng):
    a = params["a"]
    h, w = img.shape
    if a == 1.0:
        return img.copy()
    # stretch width by a, then scale uniformly to fit the original canvas and
    # letterbox the leftover with the border fill
    if a < 1.0:
        wc, hc = max(1, round(w * a)), h
    else:
        wc, hc = w, max(1, round(h / a))
    ox, oy = (w - wc) // 2, (h - hc) // 2
    fill = modal_border_value(img)
    xs, ys = _dest_grid(img.shape)
    sx = np.full(img.shape, np.nan)
    sy = np.full(img.shape, np.nan)
    inside = (xs >= ox) & (xs < ox + wc) & (ys >= oy) & (ys < oy + hc)
    rel_x = xs - ox
    rel_y = ys - oy
    src_x = rel_x * ((w - 1) / (wc - 1)) if wc > 1 else np.full(img.shape, (w - 1) / 2.0)
    src_y = rel_y * ((h - 1) / (hc - 1)) if hc > 1 else np.full(img.shape, (h - 1) / 2.0)
    sx[inside] = src_x[inside]
    sy[inside] = src_y[inside]
    return _bilinear_sample(img, sx, sy, fill)


def _apply_noise(img, params, rng):
    s = params["s"]
    if s == 0:
        return img.copy()
    noisy = img.astype(np.float64) + rng.normal(0.0, s, size=img.shape)
    return np.clip(np.rint(noisy), 0, 255).astype(np.uint8)


def _apply_barrel(img, params, rng, inverse=False):
    h, w = img.shape
    coeffs = (params["A"], params["B"], params["C"], params["D"])
    center = ((w - 1) / 2.0, (h - 1) / 2.0)
    xs, ys = _dest_grid(img.shape)
    sx, sy = barrel_map(xs, ys, coeffs, center, min(w, h) / 2.0, inverse=inverse)
    return _bilinear_sample(img, sx, sy, modal_border_value(img))


_TRANSFORMS = {
    "hflip": _apply_hflip,
    "vflip": _apply_vflip,
    "shuffle_pixels": _apply_shuffle_pixels,
    "pixelize": _apply_pixelize,
    "rotate": _apply_rotate,
    "blur": _apply_blur,
    "aspect_ratio": _apply_aspect_ratio,
    "noise": _apply_noise,
    "barrel": _apply_barrel,
    "barrel_inverse": lambda img, params, rng: _apply_barrel(img, params, rng, inverse=True),
}


def apply_pipeline(image: np.ndarray, pipe: AugPipeline) -> np.ndarray:
    img = np.asarray(image)
    if img.dtype != np.uint8 or img.ndim != 2:
        raise ValueError("augmentation input must be a 2-D uint8 array")
    for idx, step in enumerate(pipe.steps):
        rng = derive_rng(pipe.seed, idx) if step.kind in _STOCHASTIC_KINDS else None
        img = _TRANSFORMS[step.kind](img, step.params, rng)
    return img


# --- pipeline sampling and pool building ------------------------------------


def sample_pipeline(
    policy: AugPolicy, label: str, rng: np.random.Generator, seed: int
) -> AugPipeline:
    allowed = [k for k in AUG_KINDS if k not in policy.denied_for(label)]
    if not allowed:
        raise ValueError(f"no admissible augmentations for class {label}")
    depth = int(rng.integers(policy.min_steps, policy.max_steps + 1))
    steps = []
    for _ in range(depth):
        kind = allowed[int(rng.integers(len(allowed)))]
        ranges = policy.params.get(kind, DEFAULT_PARAM_RANGES.get(kind, {}))
        params: dict[str, float] = {}
        for name, (lo, hi) in ranges.items():
            if kind == "pixelize":
                params[name] = int(rng.integers(int(lo), int(hi) + 1))
            elif name == "strength":
                continue  # expanded below
            else:
                params[name] = float(rng.uniform(lo, hi))
        if kind in ("barrel", "barrel_inverse"):
            lo, hi = ranges.get("strength", DEFAULT_PARAM_RANGES[kind]["strength"])
            b = float(rng.uniform(lo, hi))
            params = {"A": 0.0, "B": b, "C": 0.0, "D": 1.0 - b}
        steps.append(AugStep(kind, params))
    return AugPipeline(steps=tuple(steps), seed=seed)


@dataclass(frozen=True, eq=False)
class Pool:
    """Per-class reservoir of augmented samples, disjoint from any dataset."""

    samples: Mapping[str, tuple[Sample, ...]]
    shortfalls: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        buckets = _normalize_buckets(self.samples)
        seen: set[str] = set()
        for label, bucket in buckets.items():
            for s in bucket:
                if s.provenance != "augmented":
                    raise ValueError(f"pool sample {s.id} has provenance {s.provenance}")
                if s.label != label:
                    raise ValueError(f"pool sample {s.id} (label {s.label}) in bucket {label}")
                if s.id in seen:
                    raise ValueError(f"duplicate pool sample id {s.id}")
                seen.add(s.id)
        object.__setattr__(self, "samples", buckets)
        object.__setattr__(self, "shortfalls", dict(self.shortfalls))

    def class_sizes(self) -> dict[str, int]:
        return {c: len(self.samples[c]) for c in CLASS_LABELS}

    @property
    def total(self) -> int:
        return sum(len(b) for b in self.samples.values())

    def iter_samples(self) -> Iterator[Sample]:
        for c in CLASS_LABELS:
            yield from self.samples[c]

    def ids(self) -> frozenset[str]:
        return frozenset(s.id for s in self.iter_samples())


def _pool_sample_id(label: str, index: int, seed: int, tag: str) -> str:
    digest = hashlib.sha256(f"{seed}/{tag}/{label}/{index}".encode()).hexdigest()[:6]
    return f"{label}/{tag}-{index:05d}-{digest}"


def build_pool(
    bases: Sequence[Dataset], policy: AugPolicy, target_per_class: int, seed: int
) -> Pool:
    """Generate target_per_class admissible augmented samples per class.

    Classes with no base samples are recorded as shortfalls rather than
    raised; every pool sample's lineage names its base and pipeline.
    """
    if not bases:
        raise ValueError("build_pool needs at least one base dataset")
    if target_per_class < 1:
        raise ValueError("target_per_class must be >= 1")
    base_ids = set()
    for b in bases:
        base_ids |= b.ids()
    buckets: dict[str, list[Sample]] = {}
    shortfalls: dict[str, int] = {}
    for ci, label in enumerate(CLASS_LABELS):
        pool_bases = [s for b in bases for s in b.samples[label]]
        if not pool_bases:
            shortfalls[label] = target_per_class
            continue
        out = []
        for i in range(target_per_class):
            pick_rng = derive_rng(seed, "pool-pick", ci, i)
            base = pool_bases[int(pick_rng.integers(len(pool_bases)))]
            pipe_rng = derive_rng(seed, "pool-pipe", ci, base.id, i)
            step_seed = derive_seed(seed, "pool-step", ci, base.id, i)
            pipe = sample_pipeline(policy, label, pipe_rng, step_seed)
            sample_id = _pool_sample_id(label, i, seed, "aug")
            if sample_id in base_ids:
                raise ValueError(f"pool id collides with a base dataset id: {sample_id}")
            out.append(
                Sample(
                    id=sample_id,
                    label=label,
                    image=apply_pipeline(base.image, pipe),
                    provenance="augmented",
                    lineage=Lineage(parent_id=base.id, pipeline=pipeline_descriptor(pipe)),
                )
            )
        buckets[label] = out
    return Pool(samples=buckets, shortfalls=shortfalls)


def build_validation(val: Dataset, per_class: int, policy: AugPolicy, seed: int) -> Dataset:
    """Pad every class with its own augmented derivatives up to exactly per_class."""
    buckets: dict[str, list[Sample]] = {}
    for ci, label in enumerate(CLASS_LABELS):
        originals = val.samples[label]
        current = list(originals)
        if len(current) > per_class:
            raise ValueError(
                f"class {label} has {len(current)} samples, above the target {per_class}"
            )
        need = per_class - len(current)
        if need > 0 and not current:
            raise ValueError(f"cannot augment empty class: {label}")
        for i in range(need):
            pick_rng = derive_rng(seed, "val-pick", ci, i)
            base = originals[int(pick_rng.integers(len(originals)))]
            pipe_rng = derive_rng(seed, "val-pipe", ci, base.id, i)
            step_seed = derive_seed(seed, "val-step", ci, base.id, i)
            pipe = sample_pipeline(policy, label, pipe_rng, step_seed)
            current.append(
                Sample(
                    id=_pool_sample_id(label, i, seed, "val-aug"),
                    label=label,
                    image=apply_pipeline(base.image, pipe),
                    provenance="augmented",
                    lineage=Lineage(parent_id=base.id, pipeline=pipeline_descriptor(pipe)),
                )
            )
        buckets[label] = current
    return Dataset(name=f"{val.name}-padded", split=val.split, samples=buckets)


# --- pool disk I/O -----------------------------------------------------------


def export_pool(pool: Pool, root) -> Path:
    from .dataset import export_dataset

    ds = Dataset(name="pool", split="train", samples=pool.samples)
    return export_dataset(ds, root, extra={"kind": "pool", "shortfalls": dict(pool.shortfalls)})


def load_pool(root) -> Pool:
    from .dataset import MANIFEST_NAME, load_dataset

    root = Path(root)
    ds = load_dataset(root)
    shortfalls = {}
    manifest_path = root / MANIFEST_NAME
    if manifest_path.exists():
        shortfalls = json.loads(manifest_path.read_text()).get("shortfalls", {})
    return Pool(samples=ds.samples, shortfalls=shortfalls)
