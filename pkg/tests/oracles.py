"""Reference implementations the library is checked against.

Kept deliberately naive and separate from the production code paths: scalar
loops, dict-based union-find, explicit confusion matrices.
"""

import math

from curator.dedupe import default_threshold, find_duplicates
from curator.embedder import embed_samples
from curator.labels import CLASS_LABELS
from curator.seeds import derive_rng


def scalar_distance(a, b, metric="euclidean") -> float:
    if metric == "euclidean":
        return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if na == 0 or nb == 0:
        return 1.0
    sim = sum(x * y for x, y in zip(a, b)) / (na * nb)
    return min(max(1.0 - sim, 0.0), 2.0)


def pairwise_oracle(rows, metric="euclidean"):
    n = len(rows)
    return [[scalar_distance(rows[i], rows[j], metric) for j in range(n)] for i in range(n)]


def duplicate_groups_oracle(ids, rows, threshold, metric="euclidean", pair_fn=None):
    """Brute-force pairwise check + dict union-find. Returns (groups, marked)."""
    n = len(ids)
    parent = {i: i for i in range(n)}
    distance = pair_fn or (lambda a, b: scalar_distance(a, b, metric))

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    for i in range(n):
        for j in range(i + 1, n):
            if distance(rows[i], rows[j]) <= threshold:
                parent[find(i)] = find(j)

    components = {}
    for i in range(n):
        components.setdefault(find(i), []).append(i)
    groups = {}
    marked = set()
    for members in components.values():
        if len(members) < 2:
            continue
        names = sorted(ids[i] for i in members)
        groups[names[0]] = frozenset(names[1:])
        marked |= set(names[1:])
    return groups, marked


def percentile_oracle(values, q) -> float:
    """Sort-based percentile with linear interpolation."""
    xs = sorted(values)
    if len(xs) == 1:
        return xs[0]
    rank = q / 100.0 * (len(xs) - 1)
    lo = int(math.floor(rank))
    frac = rank - lo
    if lo + 1 >= len(xs):
        return xs[lo]
    return xs[lo] + frac * (xs[lo + 1] - xs[lo])


def confusion_report_oracle(preds):
    """Explicit confusion-matrix statistics: {class: (P, R, F1, support)}, accuracy."""
    matrix = {(t, p): 0 for t in CLASS_LABELS for p in CLASS_LABELS}
    for r in preds:
        matrix[(r.true_label, r.predicted_label)] += 1
    present = {r.true_label for r in preds} | {r.predicted_label for r in preds}
    stats = {}
    for c in CLASS_LABELS:
        if c not in present:
            continue
        tp = matrix[(c, c)]
        fp = sum(matrix[(t, c)] for t in CLASS_LABELS if t != c)
        fn = sum(matrix[(c, p)] for p in CLASS_LABELS if p != c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        stats[c] = (precision, recall, f1, tp + fn)
    accuracy = sum(matrix[(c, c)] for c in CLASS_LABELS) / len(preds)
    return stats, accuracy


def iterative_sampling_oracle(d, p, cfg):
    """Step-by-step transliteration of the per-class replacement loop.

    Shares the embedding, duplicate finding and RNG derivation with the
    library (those have their own oracles) but owns the loop bookkeeping.
    Returns ({label: [ids]}, {label: [pool ids]}, [trace tuples]).
    """
    buckets, pools, trace = {}, {}, []
    for ci, label in enumerate(CLASS_LABELS):
        d_c = list(d.samples[label])
        p_c = list(p.samples[label])
        if not d_c and label not in cfg.max_sizes:
            buckets[label] = [s.id for s in d_c]
            pools[label] = [s.id for s in p_c]
            continue
        rng = derive_rng(cfg.seed, "sampler", ci)
        matrix = embed_samples(d_c, cfg.embedder)
        if cfg.threshold == "auto":
            thr = default_threshold(matrix, cfg.metric) if len(d_c) >= 2 else 0.0
        else:
            thr = float(cfg.threshold)
        marked = find_duplicates(matrix, thr, cfg.metric).marked
        n = 1
        while True:
            if cfg.or_semantics:
                if not ((marked or n <= cfg.iterations) and n <= cfg.hard_cap):
                    break
            elif not (marked and n <= cfg.iterations):
                break
            found = len(marked)
            d_c = [s for s in d_c if s.id not in marked]
            want = max(0, cfg.max_sizes[label] - len(d_c))
            take = min(want, len(p_c))
            if take:
                idx = rng.choice(len(p_c), size=take, replace=False)
                d_c.extend(p_c[int(i)] for i in idx)
                drop = {int(i) for i in idx}
                p_c = [s for i, s in enumerate(p_c) if i not in drop]
            trace.append((label, n, found, found, take, len(p_c), take < want))
            marked = find_duplicates(embed_samples(d_c, cfg.embedder), thr, cfg.metric).marked
            n += 1
        buckets[label] = [s.id for s in d_c]
        pools[label] = [s.id for s in p_c]
    return buckets, pools, trace
