"""Independent reference implementations used to check the library.

Everything here is deliberately written the slow, obvious way (python
loops, prefix re-scans, math.fsum) and shares no code with the package
beyond its public data types.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from copydesc.metrics import GroundTruth
from copydesc.search import CandidateList, MatchCandidate


def pooled(candidates: Iterable[MatchCandidate]) -> list[MatchCandidate]:
    return sorted(candidates, key=lambda c: (c.score, c.query_id, c.reference_id))


def oracle_micro_ap(candidates: CandidateList, truth: GroundTruth) -> float:
    """Brute-force micro AP: re-count hits over the prefix at every true pair.

    Terms are summed in ascending rank order, matching the fast path's
    accumulation order so the float result is identical.
    """
    ranked = pooled(candidates)
    flags = [(c.query_id, c.reference_id) in truth.pairs for c in ranked]
    total = 0.0
    for i, is_hit in enumerate(flags):
        if is_hit:
            hits_in_prefix = sum(flags[: i + 1])
            total += hits_in_prefix / (i + 1)
    return total / len(truth.pairs)


def oracle_recall_at_precision(candidates: CandidateList, truth: GroundTruth, p: float) -> float:
    """Max recall over all prefixes with precision >= p, each prefix re-counted."""
    ranked = pooled(candidates)
    flags = [(c.query_id, c.reference_id) in truth.pairs for c in ranked]
    best = 0.0
    for i in range(len(flags)):
        tp = sum(flags[: i + 1])
        if tp / (i + 1) >= p:
            best = max(best, tp / len(truth.pairs))
    return best


def oracle_recall_at_rank(candidates: CandidateList, truth: GroundTruth, k: int) -> float:
    found = 0
    for query_id, reference_id in truth.pairs:
        mine = [c for c in candidates if c.query_id == query_id]
        mine.sort(key=lambda c: (c.score, c.reference_id))
        if any(c.reference_id == reference_id for c in mine[:k]):
            found += 1
    return found / len(truth.pairs)


def oracle_knn(
    queries: np.ndarray,
    query_ids: Sequence[str],
    references: np.ndarray,
    reference_ids: Sequence[str],
    k: int,
) -> dict[str, list[tuple[float, str]]]:
    """Per query: k smallest (distance, reference_id), python loops only."""
    out: dict[str, list[tuple[float, str]]] = {}
    for qi, qid in enumerate(query_ids):
        q = [float(v) for v in queries[qi]]
        scored = []
        for ri, rid in enumerate(reference_ids):
            r = [float(v) for v in references[ri]]
            d = math.sqrt(math.fsum((a - b) ** 2 for a, b in zip(q, r)))
            scored.append((d, rid))
        scored.sort()
        out[qid] = scored[:k]
    return out


def oracle_gem(values: Sequence[float], p: float) -> float:
    """Plain generalized mean, no overflow guard."""
    n = len(values)
    return (math.fsum(float(v) ** p for v in values) / n) ** (1.0 / p)


def oracle_lr_ratio(epoch: float, warmup: float = 5.0, plateau_end: float = 10.0,
                    total: float = 25.0, start: float = 0.01) -> float:
    if epoch < warmup:
        return (1.0 - start) * epoch / warmup + start
    if epoch < plateau_end:
        return 1.0
    return 0.5 * (math.cos((epoch - plateau_end) / (total - plateau_end) * math.pi) + 1.0)


def oracle_batch_hard_triplet(features: np.ndarray, labels: Sequence, margin: float) -> float:
    """Exhaustive mining with python loops."""

    def dist(i: int, j: int) -> float:
        return math.sqrt(math.fsum((float(a) - float(b)) ** 2
                                   for a, b in zip(features[i], features[j])))

    n = len(labels)
    hinges = []
    for a in range(n):
        pos = [dist(a, j) for j in range(n) if j != a and labels[j] == labels[a]]
        neg = [dist(a, j) for j in range(n) if labels[j] != labels[a]]
        hinges.append(max(0.0, margin + max(pos) - min(neg)))
    return sum(hinges) / n


def oracle_soft_cross_entropy(logits: Sequence[float], target: Sequence[float]) -> float:
    m = max(logits)
    lse = m + math.log(math.fsum(math.exp(z - m) for z in logits))
    return -math.fsum(t * (z - lse) for z, t in zip(logits, target))


def entropy(target: Sequence[float]) -> float:
    return -math.fsum(t * math.log(t) for t in target if t > 0.0)


def random_metric_instance(
    rng: np.random.Generator,
    max_queries: int = 50,
    max_references: int = 500,
    k: int = 10,
    tie_grid: int | None = 40,
) -> tuple[CandidateList, GroundTruth]:
    """Random candidates + truth for metric testing.

    ``tie_grid`` quantizes scores onto a small grid so that pooled-ranking
    ties (the tricky case) actually occur.
    """
    n_q = int(rng.integers(1, max_queries + 1))
    n_r = int(rng.integers(2, max_references + 1))
    query_ids = [f"q{i:03d}" for i in range(n_q)]
    reference_ids = [f"r{i:03d}" for i in range(n_r)]

    entries: list[MatchCandidate] = []
    for qid in query_ids:
        n_cand = int(rng.integers(1, min(k, n_r) + 1))
        refs = rng.choice(n_r, size=n_cand, replace=False)
        if tie_grid is not None:
            scores = rng.integers(0, tie_grid, size=n_cand) / 8.0
        else:
            scores = rng.uniform(0.0, 4.0, size=n_cand)
        scores = np.sort(scores.astype(np.float64))
        for ref, score in zip(refs, scores):
            entries.append(MatchCandidate(qid, reference_ids[int(ref)], float(score)))
    candidates = CandidateList(entries=tuple(entries), k=k)

    pairs = []
    for qid in query_ids:
        draw = rng.uniform()
        if draw < 0.4:
            continue  # distractor query
        if draw < 0.8:
            mine = [c.reference_id for c in entries if c.query_id == qid]
            pairs.append((qid, str(rng.choice(mine))))
        else:
            # true reference the search never returned
            pairs.append((qid, reference_ids[int(rng.integers(0, n_r))]))
    if not pairs:
        pairs.append((query_ids[0], entries[0].reference_id))
    seen: set[str] = set()
    unique_pairs = []
    for q, r in pairs:
        if q not in seen:
            seen.add(q)
            unique_pairs.append((q, r))
    return candidates, GroundTruth.from_pairs(unique_pairs)


def random_unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    X = rng.standard_normal((n, dim))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    return X.astype(np.float32)
