"""Near-duplicate detection over embedding matrices.

Builds the graph whose edges join samples at distance <= threshold, takes
connected components of size >= 2 as duplicate groups, keeps one
representative per group (lexicographically smallest id) and marks the rest
for removal. Dense O(n^2) distances; per-class sizes stay small enough that
exactness beats indexing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedder import EmbeddingMatrix

METRICS = ("euclidean", "cosine")


class UnionFind:
    """Disjoint sets over integer indices with path compression."""

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, x: int, y: int) -> None:
        rx, ry = self.find(x), self.find(y)
        if rx != ry:
            self.parent[max(rx, ry)] = min(rx, ry)


@dataclass(frozen=True)
class DuplicateGroup:
    representative: str
    duplicates: tuple[str, ...]

    def __post_init__(self):
        if not self.duplicates:
            raise ValueError("duplicate group needs at least one duplicate")
        members = (self.representative,) + self.duplicates
        if len(set(members)) != len(members):
            raise ValueError("duplicate group members must be distinct")


@dataclass(frozen=True)
class DuplicateReport:
    threshold: float
    metric: str
    groups: tuple[DuplicateGroup, ...]

    @property
    def marked(self) -> frozenset[str]:
        return frozenset(i for g in self.groups for i in g.duplicates)

    def to_json(self) -> dict:
        return {
            "threshold": self.threshold,
            "metric": self.metric,
            "groups": [
                {"representative": g.representative, "duplicates": list(g.duplicates)}
                for g in self.groups
            ],
        }

    @classmethod
    def from_json(cls, data) -> "DuplicateReport":
        return cls(
            threshold=float(data["threshold"]),
            metric=data["metric"],
            groups=tuple(
                DuplicateGroup(g["representative"], tuple(g["duplicates"]))
                for g in data["groups"]
            ),
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=2))
        return path

    @classmethod
    def load(cls, path) -> "DuplicateReport":
        return cls.from_json(json.loads(Path(path).read_text()))


def pairwise_distances(m: EmbeddingMatrix, metric: str = "euclidean") -> np.ndarray:
    """Symmetric n x n distance matrix with an exactly-zero diagonal."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric: {metric}")
    x = np.asarray(m.rows, dtype=np.float64)
    n = x.shape[0]
    out = np.zeros((n, n))
    if n == 0:
        return out
    if metric == "euclidean":
        for i in range(n - 1):
            diff = x[i + 1 :] - x[i]
            out[i, i + 1 :] = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    else:
        norms = np.linalg.norm(x, axis=1)
        safe = np.where(norms > 0, norms, 1.0)
        unit = x / safe[:, None]
        for i in range(n - 1):
            out[i, i + 1 :] = np.clip(1.0 - unit[i + 1 :] @ unit[i], 0.0, 2.0)
    # mirror the strict upper triangle so symmetry is exact by construction
    return out + out.T


def find_duplicates(
    m: EmbeddingMatrix, threshold: float, metric: str = "euclidean"
) -> DuplicateReport:
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    n = len(m)
    dist = pairwise_distances(m, metric)
    uf = UnionFind(n)
    for i in range(n - 1):
        for j in np.nonzero(dist[i, i + 1 :] <= threshold)[0]:
            uf.union(i, int(j) + i + 1)
    components: dict[int, list[int]] = {}
    for i in range(n):
        components.setdefault(uf.find(i), []).append(i)
    groups = []
    for members in components.values():
        if len(members) < 2:
            continue
        ids = sorted(m.ids[i] for i in members)
        groups.append(DuplicateGroup(representative=ids[0], duplicates=tuple(ids[1:])))
    groups.sort(key=lambda g: g.representative)
    return DuplicateReport(threshold=float(threshold), metric=metric, groups=tuple(groups))


def default_threshold(m: EmbeddingMatrix, metric: str = "euclidean") -> float:
    """5th percentile (linear interpolation) of the positive pairwise distances.

    The right cutoff depends on the embedding source, so this is a starting
    point meant to be overridden from config once a human has eyeballed the
    resulting groups.
    """
    n = len(m)
    if n < 2:
        raise ValueError("need >= 2 samples to derive threshold")
    dist = pairwise_distances(m, metric)
    upper = dist[np.triu_indices(n, k=1)]
    positive = upper[upper > 0]
    if positive.size == 0:
        return 0.0
    return float(np.percentile(positive, 5.0))
