"""Exhaustive top-k Euclidean matching of queries against a reference set.

The hot loop is a reference-chunked norm-expansion kernel
(``d² = ‖q‖² + ‖r‖² − 2⟨q,r⟩``) computed in float64 with tiny negative
squared distances clamped to zero before the sqrt. Query blocks are
independent, so thread-count never changes the result; reference chunking
follows a fixed schedule, so candidate lists are bit-identical across
1..N workers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np
from sklearn.base import BaseEstimator

from .descriptors import DescriptorSet
from .exceptions import DuplicatePairError, ValidationError
from .validation import as_matrix, check_same_dim

DEFAULT_CHUNK_SIZE = 16384
_QUERY_BLOCK = 512
DISTANCE_MATRIX_MAX_ENTRIES = 10**8


class MatchCandidate(NamedTuple):
    """One scored (query, reference) pair; score is Euclidean distance."""

    query_id: str
    reference_id: str
    score: float


@dataclass(frozen=True)
class CandidateList:
    """Candidate pairs with a per-query cap `k`, sorted ascending within each query."""

    entries: tuple[MatchCandidate, ...]
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        seen: set[tuple[str, str]] = set()
        per_query: dict[str, int] = {}
        prev: dict[str, float] = {}
        for c in self.entries:
            if not np.isfinite(c.score) or c.score < 0.0:
                raise ValidationError(
                    f"candidate ({c.query_id!r}, {c.reference_id!r}) has invalid score {c.score!r}"
                )
            key = (c.query_id, c.reference_id)
            if key in seen:
                raise DuplicatePairError(f"duplicate candidate pair {key!r}")
            seen.add(key)
            per_query[c.query_id] = per_query.get(c.query_id, 0) + 1
            if per_query[c.query_id] > self.k:
                raise ValidationError(
                    f"query {c.query_id!r} has more than k={self.k} candidates"
                )
            if c.query_id in prev and c.score < prev[c.query_id]:
                raise ValidationError(
                    f"candidates for query {c.query_id!r} are not sorted by score"
                )
            prev[c.query_id] = c.score

    def __iter__(self) -> Iterator[MatchCandidate]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def by_query(self) -> dict[str, list[MatchCandidate]]:
        groups: dict[str, list[MatchCandidate]] = {}
        for c in self.entries:
            groups.setdefault(c.query_id, []).append(c)
        return groups


def _sq_norms(X64: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", X64, X64)


def _topk_rows(dist: np.ndarray, ids: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per row, the k smallest distances with ties broken by smaller id.

    `ids` is (n_rows, n_cols) int64; returns (dist (n_rows,k), ids (n_rows,k))
    ordered ascending by (distance, id).
    """
    n_rows, n_cols = dist.shape
    k = min(k, n_cols)
    out_d = np.empty((n_rows, k), dtype=np.float64)
    out_i = np.empty((n_rows, k), dtype=np.int64)
    if k < n_cols:
        kth = np.partition(dist, k - 1, axis=1)[:, k - 1]
    else:
        kth = None
    for r in range(n_rows):
        if kth is None:
            cand = np.arange(n_cols)
        else:
            # All strictly-smaller entries plus the tie group at the kth value.
            cand = np.flatnonzero(dist[r] <= kth[r])
        order = np.lexsort((ids[r, cand], dist[r, cand]))[:k]
        sel = cand[order]
        out_d[r] = dist[r, sel]
        out_i[r] = ids[r, sel]
    return out_d, out_i


class ExhaustiveMatcher(BaseEstimator):
    """Exact brute-force nearest-neighbor matcher over Euclidean distance.

    sklearn-style: ``fit(X)`` indexes the reference vectors, ``kneighbors(Q)``
    returns the exact ``n_candidates`` smallest distances per query with
    deterministic index tie-breaking (smaller reference row wins).

    Parameters
    ----------
    n_candidates : per-query number of neighbors returned by default.
    chunk_size : reference rows per distance block; fixed schedule keeps
        results independent of worker count.
    n_workers : threads across query blocks; 0 = one per CPU.
    """

    def __init__(self, n_candidates: int = 10, chunk_size: int = DEFAULT_CHUNK_SIZE,
                 n_workers: int = 1):
        self.n_candidates = n_candidates
        self.chunk_size = chunk_size
        self.n_workers = n_workers

    def fit(self, X, y=None) -> "ExhaustiveMatcher":
        if self.n_candidates < 1:
            raise ValidationError(f"n_candidates must be >= 1, got {self.n_candidates}")
        if self.chunk_size < 1:
            raise ValidationError(f"chunk_size must be >= 1, got {self.chunk_size}")
        self.references_ = as_matrix(X, "references")
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "references_"):
            raise ValidationError("matcher is not fitted; call fit(references) first")

    def _block_kneighbors(self, Qb: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        refs = self.references_
        Qb64 = Qb.astype(np.float64)
        q_norms = _sq_norms(Qb64)
        best_d: np.ndarray | None = None
        best_i: np.ndarray | None = None
        for start in range(0, refs.shape[0], self.chunk_size):
            chunk = refs[start : start + self.chunk_size].astype(np.float64)
            r_norms = _sq_norms(chunk)
            d2 = q_norms[:, None] + r_norms[None, :] - 2.0 * (Qb64 @ chunk.T)
            np.maximum(d2, 0.0, out=d2)  # clamp fp negatives before sqrt
            d = np.sqrt(d2)
            ids = np.broadcast_to(
                np.arange(start, start + chunk.shape[0], dtype=np.int64), d.shape
            )
            if best_d is None:
                best_d, best_i = _topk_rows(d, ids, k)
            else:
                best_d, best_i = _topk_rows(
                    np.concatenate([best_d, d], axis=1),
                    np.concatenate([best_i, ids], axis=1),
                    k,
                )
        assert best_d is not None and best_i is not None
        return best_d, best_i

    def kneighbors(self, Q, k: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Exact k smallest distances (and reference rows) per query.

        Returns ``(distances, indices)`` of shape (n_queries, min(k, n_refs)),
        each row ascending by (distance, reference row).
        """
        self._check_fitted()
        Qm = as_matrix(Q, "queries")
        check_same_dim(Qm, self.references_, "queries", "references")
        if k is None:
            k = self.n_candidates
        if k < 1:
            raise ValidationError(f"k must be >= 1, got {k}")
        k = min(k, self.references_.shape[0])

        n_q = Qm.shape[0]
        dist = np.empty((n_q, k), dtype=np.float64)
        idx = np.empty((n_q, k), dtype=np.int64)
        blocks = [(s, min(s + _QUERY_BLOCK, n_q)) for s in range(0, n_q, _QUERY_BLOCK)]

        def run(block: tuple[int, int]) -> None:
            s, e = block
            dist[s:e], idx[s:e] = self._block_kneighbors(Qm[s:e], k)

        workers = self.n_workers if self.n_workers > 0 else None
        if self.n_workers == 1 or len(blocks) == 1:
            for b in blocks:
                run(b)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(run, blocks))
        return dist, idx


def knn_search(
    queries: DescriptorSet,
    references: DescriptorSet,
    k: int,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    n_workers: int = 1,
) -> CandidateList:
    """Exact top-k matches per query, ties broken by smaller reference id.

    References are scanned in id-sorted order so that index tie-breaking in
    the matcher coincides with lexicographic id tie-breaking; the result is
    therefore invariant to reference storage order.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if len(references) == 0:
        raise ValidationError("reference set is empty")
    order = sorted(range(len(references)), key=references.ids.__getitem__)
    sorted_ids = [references.ids[i] for i in order]
    matcher = ExhaustiveMatcher(
        n_candidates=k, chunk_size=chunk_size, n_workers=n_workers
    ).fit(references.vectors[order])
    dist, idx = matcher.kneighbors(queries.vectors, k=k)

    entries = []
    for qi, qid in enumerate(queries.ids):
        for j in range(dist.shape[1]):
            entries.append(MatchCandidate(qid, sorted_ids[idx[qi, j]], float(dist[qi, j])))
    return CandidateList(entries=tuple(entries), k=k)


def distance_matrix(
    queries: DescriptorSet | np.ndarray,
    references: DescriptorSet | np.ndarray,
    force: bool = False,
) -> np.ndarray:
    """Dense Euclidean distance matrix via direct per-row differences.

    Independent of the expansion kernel in :class:`ExhaustiveMatcher` on
    purpose — this is the small-scale debugging and cross-check route.
    Refuses more than 10^8 entries unless `force` is set.
    """
    Qm = queries.vectors if isinstance(queries, DescriptorSet) else as_matrix(queries, "queries")
    Rm = (
        references.vectors
        if isinstance(references, DescriptorSet)
        else as_matrix(references, "references")
    )
    check_same_dim(Qm, Rm, "queries", "references")
    n_entries = Qm.shape[0] * Rm.shape[0]
    if n_entries > DISTANCE_MATRIX_MAX_ENTRIES and not force:
        raise ValidationError(
            f"distance matrix would have {n_entries} entries "
            f"(> {DISTANCE_MATRIX_MAX_ENTRIES}); pass force=True to override"
        )
    R64 = Rm.astype(np.float64)
    out = np.empty((Qm.shape[0], Rm.shape[0]), dtype=np.float64)
    for i in range(Qm.shape[0]):
        out[i] = np.linalg.norm(R64 - Qm[i].astype(np.float64), axis=1)
    return out
