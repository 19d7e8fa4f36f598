"""Competition scoring: micro average precision, Recall@Precision, Recall@Rank.

Micro AP is non-interpolated AP over the single pooled ranking of all
candidate pairs across all queries, normalized by the total number of
ground-truth pairs; a pair emitted for a distractor query therefore costs
precision everywhere below it. Pooled ties are broken by
(query_id, reference_id) so reports reproduce byte for byte.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .exceptions import ValidationError
from .search import CandidateList, MatchCandidate


@dataclass(frozen=True)
class GroundTruth:
    """True (query_id, reference_id) pairs; queries not listed are distractors.

    Each edited query has exactly one source reference, so a query id may
    appear at most once.
    """

    pairs: frozenset[tuple[str, str]]

    def __post_init__(self):
        seen: set[str] = set()
        for q, _ in sorted(self.pairs):
            if q in seen:
                raise ValidationError(f"query {q!r} appears twice in ground truth")
            seen.add(q)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "GroundTruth":
        return cls(frozenset((str(q), str(r)) for q, r in pairs))

    @property
    def positive_queries(self) -> int:
        return len(self.pairs)

    def reference_of(self) -> dict[str, str]:
        return {q: r for q, r in self.pairs}

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class EvalReport:
    """Scores for one candidate list against one ground truth."""

    micro_ap: float
    recall_at_p90: float
    recall_at_rank: dict[int, float]
    pr_curve: list[tuple[float, float]] | None = None

    def as_dict(self) -> dict:
        out: dict = {
            "micro_ap": self.micro_ap,
            "recall_at_p90": self.recall_at_p90,
            "recall_at_rank": {str(k): v for k, v in sorted(self.recall_at_rank.items())},
        }
        if self.pr_curve is not None:
            out["pr_curve"] = [[r, p] for r, p in self.pr_curve]
        return out


def _pooled_ranking(candidates: CandidateList) -> list[MatchCandidate]:
    return sorted(candidates, key=lambda c: (c.score, c.query_id, c.reference_id))


def _check_inputs(candidates: CandidateList, truth: GroundTruth) -> None:
    if len(truth) == 0:
        raise ValidationError("ground truth is empty; micro metrics are undefined")


def micro_ap(candidates: CandidateList, truth: GroundTruth) -> float:
    """Micro average precision over the pooled global ranking.

    Walks the ranking in ascending score order and sums precision-at-rank at
    every true pair, divided by the total number of ground-truth pairs.
    True pairs never emitted contribute zero.
    """
    _check_inputs(candidates, truth)
    if len(candidates) == 0:
        return 0.0
    hits = 0
    total = 0.0
    for rank, cand in enumerate(_pooled_ranking(candidates), start=1):
        if (cand.query_id, cand.reference_id) in truth.pairs:
            hits += 1
            total += hits / rank
    return total / len(truth)


def recall_at_precision(candidates: CandidateList, truth: GroundTruth, p: float) -> float:
    """Maximum recall over all ranking prefixes whose precision is >= p."""
    if not 0.0 < p <= 1.0:
        raise ValidationError(f"precision level must be in (0, 1], got {p}")
    _check_inputs(candidates, truth)
    best = 0.0
    hits = 0
    for rank, cand in enumerate(_pooled_ranking(candidates), start=1):
        if (cand.query_id, cand.reference_id) in truth.pairs:
            hits += 1
        if hits / rank >= p:
            best = max(best, hits / len(truth))
    return best


def recall_at_rank(candidates: CandidateList, truth: GroundTruth, k: int) -> float:
    """Fraction of ground-truth queries whose true reference is in their top k.

    Computed per query (ties broken by reference id), so it is blind to
    cross-query score comparability — unlike micro AP.
    """
    if k < 1:
        raise ValidationError(f"rank must be >= 1, got {k}")
    _check_inputs(candidates, truth)
    groups = candidates.by_query()
    found = 0
    for q, true_ref in truth.pairs:
        ranked = sorted(groups.get(q, ()), key=lambda c: (c.score, c.reference_id))
        if any(c.reference_id == true_ref for c in ranked[:k]):
            found += 1
    return found / len(truth)


def pr_curve(candidates: CandidateList, truth: GroundTruth) -> list[tuple[float, float]]:
    """(recall, precision) after each rank of the pooled ranking."""
    _check_inputs(candidates, truth)
    points: list[tuple[float, float]] = []
    hits = 0
    for rank, cand in enumerate(_pooled_ranking(candidates), start=1):
        if (cand.query_id, cand.reference_id) in truth.pairs:
            hits += 1
        points.append((hits / len(truth), hits / rank))
    return points


def evaluate(
    candidates: CandidateList,
    truth: GroundTruth,
    ranks: Sequence[int] = (1, 10),
    precision_level: float = 0.9,
    include_curve: bool = False,
) -> EvalReport:
    """Full report: micro AP, Recall@Precision, per-query Recall@Rank."""
    return EvalReport(
        micro_ap=micro_ap(candidates, truth),
        recall_at_p90=recall_at_precision(candidates, truth, precision_level),
        recall_at_rank={int(k): recall_at_rank(candidates, truth, int(k)) for k in ranks},
        pr_curve=pr_curve(candidates, truth) if include_curve else None,
    )
