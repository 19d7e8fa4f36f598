"""Descriptor stretching: rescale each query by its training-set affinity.

For every query vector, the mean of its top-n inner products against the
whole training set (``s_n``) is computed, and the query is replaced by
``alpha * s_n * query``. Stretched vectors are deliberately NOT
re-normalized — the varying norm is the point: it makes raw Euclidean
scores comparable across queries while leaving each query's own reference
ordering untouched. Reference and training sets are never modified.

Top-n selection is by value only (ties contribute whichever equal values
win), computed with an exact chunked scan of the training set in float64.
A non-positive ``s_n`` flips or collapses the stretched vector; that case
is flagged in the report, never clamped, because the formula's literal
output must stay deterministic on adversarial inputs.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .descriptors import MAX_FINAL_DIM, DescriptorSet, Role, euclidean_distance
from .exceptions import ValidationError
from .search import DEFAULT_CHUNK_SIZE
from .validation import as_matrix, check_same_dim, check_unit_rows

_QUERY_BLOCK = 1024


@dataclass(frozen=True)
class StretchConfig:
    """Stretch hyper-parameters: scale factor `alpha`, top-`n` pool size."""

    alpha: float = 2.5
    n: int = 5

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValidationError(f"alpha must be > 0, got {self.alpha}")
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}")


@dataclass(frozen=True)
class StretchReport:
    """Per-query s_n values plus summary statistics.

    For unit-norm inputs every s_n lies in [-1, 1]. Queries whose s_n is
    <= 0 are listed in `nonpositive_ids`: their stretched vectors collapsed
    to zero or flipped direction.
    """

    alpha: float
    n: int
    ids: tuple[str, ...]
    s_values: tuple[float, ...]
    nonpositive_ids: tuple[str, ...]

    @property
    def s_min(self) -> float:
        return min(self.s_values)

    @property
    def s_mean(self) -> float:
        return sum(self.s_values) / len(self.s_values)

    @property
    def s_max(self) -> float:
        return max(self.s_values)

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "n": self.n,
            "per_query": [
                {"id": i, "s_n": s} for i, s in zip(self.ids, self.s_values)
            ],
            "summary": {"min": self.s_min, "mean": self.s_mean, "max": self.s_max},
            "nonpositive_ids": list(self.nonpositive_ids),
        }


class DescriptorStretcher(BaseEstimator, TransformerMixin):
    """sklearn-style transformer applying descriptor stretching.

    ``fit(X)`` stores the training descriptors; ``transform(Q)`` rescales
    each query row by ``alpha *`` (mean of its `n_top` largest inner
    products against the training rows). Both sides must be unit-norm
    float vectors of equal dimension.

    Parameters
    ----------
    alpha : positive scale factor applied on top of s_n.
    n_top : how many of the largest inner products are averaged.
    chunk_size : training rows per scan block (fixed schedule).
    n_workers : threads across query blocks; 0 = one per CPU.
    """

    def __init__(self, alpha: float = 2.5, n_top: int = 5,
                 chunk_size: int = DEFAULT_CHUNK_SIZE, n_workers: int = 1):
        self.alpha = alpha
        self.n_top = n_top
        self.chunk_size = chunk_size
        self.n_workers = n_workers

    def fit(self, X, y=None) -> "DescriptorStretcher":
        if not self.alpha > 0:
            raise ValidationError(f"alpha must be > 0, got {self.alpha}")
        if self.n_top < 1:
            raise ValidationError(f"n_top must be >= 1, got {self.n_top}")
        if self.chunk_size < 1:
            raise ValidationError(f"chunk_size must be >= 1, got {self.chunk_size}")
        mat = as_matrix(X, "training")
        check_unit_rows(mat, "training")
        if mat.shape[0] < self.n_top:
            raise ValidationError(
                f"training set has {mat.shape[0]} vectors, fewer than n_top={self.n_top}"
            )
        self.training_ = mat
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "training_"):
            raise ValidationError("stretcher is not fitted; call fit(training) first")

    def _block_factors(self, Qb: np.ndarray) -> np.ndarray:
        train = self.training_
        n = self.n_top
        Qb64 = Qb.astype(np.float64)
        best = np.full((Qb.shape[0], n), -np.inf)
        for start in range(0, train.shape[0], self.chunk_size):
            chunk = train[start : start + self.chunk_size].astype(np.float64)
            ips = Qb64 @ chunk.T
            pool = np.concatenate([best, ips], axis=1)
            best = np.partition(pool, pool.shape[1] - n, axis=1)[:, -n:]
        # Sort descending before averaging so the reduction order is fixed
        # regardless of how the chunks supplied the values.
        best = -np.sort(-best, axis=1)
        return best.mean(axis=1)

    def scale_factors(self, Q) -> np.ndarray:
        """s_n per query row: mean of the n_top largest training inner products."""
        self._check_fitted()
        Qm = as_matrix(Q, "queries")
        check_same_dim(Qm, self.training_, "queries", "training")
        check_unit_rows(Qm, "queries")

        n_q = Qm.shape[0]
        out = np.empty(n_q, dtype=np.float64)
        blocks = [(s, min(s + _QUERY_BLOCK, n_q)) for s in range(0, n_q, _QUERY_BLOCK)]

        def run(block: tuple[int, int]) -> None:
            s, e = block
            out[s:e] = self._block_factors(Qm[s:e])

        if self.n_workers == 1 or len(blocks) == 1:
            for b in blocks:
                run(b)
        else:
            workers = self.n_workers if self.n_workers > 0 else None
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(run, blocks))
        return out

    def transform(self, Q) -> np.ndarray:
        """Stretched queries ``alpha * s_n * q`` as float32; no re-normalization."""
        factors = self.scale_factors(Q)
        Qm = as_matrix(Q, "queries")
        scaled = (self.alpha * factors)[:, None] * Qm.astype(np.float64)
        return scaled.astype(np.float32)


def stretch(
    queries: DescriptorSet,
    training: DescriptorSet,
    config: StretchConfig | None = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    n_workers: int = 1,
) -> tuple[DescriptorSet, StretchReport]:
    """Stretch a fused query set against a fused training set.

    Role and dimension preconditions are enforced here; ids and order of the
    output equal the input's. The training set is read-only throughout.
    """
    cfg = config or StretchConfig()
    if queries.role != Role.QUERY:
        raise ValidationError(f"queries set has role {queries.role.name}, expected QUERY")
    if training.role != Role.TRAINING:
        raise ValidationError(
            f"training set has role {training.role.name}, expected TRAINING"
        )
    if queries.dim > MAX_FINAL_DIM:
        raise ValidationError(
            f"final descriptors are capped at {MAX_FINAL_DIM} dims, got {queries.dim}"
        )
    est = DescriptorStretcher(
        alpha=cfg.alpha, n_top=cfg.n, chunk_size=chunk_size, n_workers=n_workers
    ).fit(training.vectors)
    factors = est.scale_factors(queries.vectors)
    stretched = (cfg.alpha * factors)[:, None] * queries.vectors.astype(np.float64)
    out = DescriptorSet(Role.QUERY, queries.ids, stretched.astype(np.float32))
    report = StretchReport(
        alpha=cfg.alpha,
        n=cfg.n,
        ids=queries.ids,
        s_values=tuple(float(s) for s in factors),
        nonpositive_ids=tuple(
            qid for qid, s in zip(queries.ids, factors) if s <= 0.0
        ),
    )
    return out, report


def stretched_score(q_hat, r) -> float:
    """Euclidean distance of a stretched query to a reference vector."""
    return euclidean_distance(q_hat, r)
