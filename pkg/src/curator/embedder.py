"""256-dimensional sample embeddings.

Two sources: a built-in deterministic baseline (area-averaged 16x16 grid,
optionally L2-normalized) and import of externally computed vectors from a
trained model. Both feed the same distance / dedupe machinery, so the
baseline keeps the exact 256-wide shape of the imported vectors.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset import Dataset, write_atomic

EMBED_DIM = 256
_MAGIC = b"EMB1"


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    ids: tuple[str, ...]
    rows: np.ndarray  # (n, 256) float64

    def __post_init__(self):
        ids = tuple(self.ids)
        rows = np.asarray(self.rows, dtype=np.float64)
        if len(ids) == 0:
            rows = rows.reshape(0, EMBED_DIM)
        else:
            rows = rows.reshape(len(ids), -1)
            if rows.shape[1] != EMBED_DIM:
                raise ValueError(f"embedding dim {rows.shape[1]} != {EMBED_DIM}")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate ids in embedding matrix")
        if rows.size and not np.all(np.isfinite(rows)):
            raise ValueError("non-finite embedding values")
        rows.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "rows", rows)

    def __len__(self) -> int:
        return len(self.ids)

    def row_for(self, sample_id: str) -> np.ndarray:
        return self.rows[self.ids.index(sample_id)]


@dataclass(frozen=True)
class EmbedderSpec:
    kind: str = "baseline"  # baseline | imported
    l2_normalize: bool = True
    grid: tuple[int, int] = (16, 16)
    path: str | None = None  # embeddings file, imported kind only

    def __post_init__(self):
        if self.kind not in ("baseline", "imported"):
            raise ValueError(f"embedder kind must be baseline or imported, got {self.kind!r}")
        gh, gw = self.grid
        if gh * gw != EMBED_DIM:
            raise ValueError(f"grid {gh}x{gw} does not cover {EMBED_DIM} features")
        if self.kind == "imported" and not self.path:
            raise ValueError("imported embedder needs a file path")


def _area_weights(src: int, dst: int) -> np.ndarray:
    """Row-stochastic (dst, src) matrix averaging src cells over dst equal spans."""
    w = np.zeros((dst, src))
    span = src / dst
    for i in range(dst):
        lo, hi = i * span, (i + 1) * span
        for j in range(int(math.floor(lo)), min(int(math.ceil(hi)), src)):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                w[i, j] = overlap
    return w / span


@lru_cache(maxsize=64)
def _weights_cached(src: int, dst: int) -> np.ndarray:
    w = _area_weights(src, dst)
    w.setflags(write=False)
    return w


def embed_image(image: np.ndarray, spec: EmbedderSpec | None = None) -> np.ndarray:
    """Box-filter the image onto the spec grid, scale to [0,1], flatten, normalize."""
    spec = spec or EmbedderSpec()
    img = np.asarray(image, dtype=np.float64) / 255.0
    h, w = img.shape
    gh, gw = spec.grid
    pooled = _weights_cached(h, gh) @ img @ _weights_cached(w, gw).T
    vec = pooled.reshape(-1)
    if spec.l2_normalize:
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec = vec / norm
    return vec


def embed_samples(samples, spec: EmbedderSpec | None = None) -> EmbeddingMatrix:
    """Embed a sequence of samples, rows in input order."""
    spec = spec or EmbedderSpec()
    samples = list(samples)
    ids = tuple(s.id for s in samples)
    if spec.kind == "baseline":
        rows = (
            np.stack([embed_image(s.image, spec) for s in samples])
            if samples
            else np.zeros((0, EMBED_DIM))
        )
        return EmbeddingMatrix(ids=ids, rows=rows)
    table = _imported_table(spec.path)
    missing = [i for i in ids if i not in table]
    if missing:
        raise ValueError(f"embeddings file missing ids: {', '.join(missing)}")
    rows = np.stack([table[i] for i in ids]) if ids else np.zeros((0, EMBED_DIM))
    return EmbeddingMatrix(ids=ids, rows=rows)


def embed_dataset_class(d: Dataset, label: str, spec: EmbedderSpec | None = None) -> EmbeddingMatrix:
    return embed_samples(d.samples[label], spec)


def _imported_table(path: str | None) -> Mapping[str, np.ndarray]:
    p = Path(path)
    stat = p.stat()
    return _imported_table_cached(str(p.resolve()), stat.st_mtime_ns, stat.st_size)


@lru_cache(maxsize=8)
def _imported_table_cached(path: str, mtime_ns: int, size: int) -> Mapping[str, np.ndarray]:
    m = import_embeddings(path)
    return dict(zip(m.ids, m.rows))


# --- file format ----------------------------------------------------------
#
# Binary, little-endian: magic "EMB1", u32 row count, u32 dim (=256), then per
# row u16 id length + UTF-8 id + 256 f32. CSV (header id,v0..v255) also
# accepted on import.


def export_embeddings(m: EmbeddingMatrix, path) -> Path:
    path = Path(path)
    out = bytearray()
    out += _MAGIC
    out += struct.pack("<II", len(m.ids), EMBED_DIM)
    for sample_id, row in zip(m.ids, m.rows):
        encoded = sample_id.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"id too long to serialize: {sample_id[:32]}...")
        out += struct.pack("<H", len(encoded))
        out += encoded
        out += row.astype("<f4").tobytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    write_atomic(path, bytes(out))
    return path


def import_embeddings(path) -> EmbeddingMatrix:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] == _MAGIC:
        return _import_binary(data, path)
    return _import_csv(path)


def _import_binary(data: bytes, path: Path) -> EmbeddingMatrix:
    if len(data) < 12:
        raise ValueError(f"malformed embeddings file (truncated header): {path}")
    n_rows, dim = struct.unpack_from("<II", data, 4)
    if dim != EMBED_DIM:
        raise ValueError(f"embedding dim {dim} != {EMBED_DIM}")
    ids: list[str] = []
    rows = np.zeros((n_rows, EMBED_DIM))
    offset = 12
    for r in range(n_rows):
        if offset + 2 > len(data):
            raise ValueError(f"malformed embeddings file (truncated at row {r}): {path}")
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        end = offset + id_len + 4 * EMBED_DIM
        if end > len(data):
            raise ValueError(f"malformed embeddings file (truncated at row {r}): {path}")
        ids.append(data[offset : offset + id_len].decode("utf-8"))
        offset += id_len
        rows[r] = np.frombuffer(data, dtype="<f4", count=EMBED_DIM, offset=offset)
        offset += 4 * EMBED_DIM
    if offset != len(data):
        raise ValueError(f"malformed embeddings file (trailing bytes): {path}")
    _check_unique(ids, path)
    return EmbeddingMatrix(ids=tuple(ids), rows=rows)


def _import_csv(path: Path) -> EmbeddingMatrix:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"malformed embeddings file (empty): {path}") from None
        if not header or header[0] != "id":
            raise ValueError(f"malformed embeddings file (bad header): {path}")
        if len(header) - 1 != EMBED_DIM:
            raise ValueError(f"embedding dim {len(header) - 1} != {EMBED_DIM}")
        ids: list[str] = []
        values: list[np.ndarray] = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != EMBED_DIM + 1:
                raise ValueError(f"malformed embeddings file (line {line_no}): {path}")
            ids.append(row[0])
            values.append(np.asarray(row[1:], dtype="<f4").astype(np.float64))
    _check_unique(ids, path)
    rows = np.stack(values) if values else np.zeros((0, EMBED_DIM))
    return EmbeddingMatrix(ids=tuple(ids), rows=rows)


def _check_unique(ids: Sequence[str], path: Path) -> None:
    seen: set[str] = set()
    for i in ids:
        if i in seen:
            raise ValueError(f"duplicate id in embeddings file: {i} ({path})")
        seen.add(i)
