"""Rank-based evaluation metrics and the evaluation report container.

Classification uses precision@k and binary-relevance NDCG@k with the
log2(rank + 1) discount; answer selection uses mean average precision and
mean reciprocal rank over question groups.  Ranking ties everywhere break
by ascending id for determinism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


def rank_by_score(scores: Sequence[float], ids: Sequence[int] | None = None) -> list[int]:
    """Ids sorted by descending score; equal scores order by ascending id."""
    scores = np.asarray(scores, dtype=np.float64)
    ids = np.arange(len(scores)) if ids is None else np.asarray(ids)
    order = np.lexsort((ids, -scores))
    return [int(ids[i]) for i in order]


def precision_at_k(ranked: Sequence[int], truth: Iterable[int], k: int) -> float:
    """|top-k intersect truth| / k."""
    if k < 1:
        raise ValueError("k must be at least 1")
    truth = set(truth)
    if not truth:
        return 0.0
    hits = sum(1 for label in ranked[:k] if label in truth)
    return hits / k


def ndcg_at_k(ranked: Sequence[int], truth: Iterable[int], k: int) -> float:
    """Binary-relevance NDCG@k; 0 when truth is empty.

    DCG sums 1/log2(rank + 1) over relevant items in the top k; the ideal
    DCG places min(k, |truth|) hits at the top.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    truth = set(truth)
    if not truth:
        return 0.0
    dcg = sum(
        1.0 / math.log2(r + 1)
        for r, label in enumerate(ranked[:k], start=1)
        if label in truth
    )
    idcg = sum(1.0 / math.log2(r + 1) for r in range(1, min(k, len(truth)) + 1))
    return dcg / idcg


def average_precision(flags: Sequence[bool]) -> float:
    """AP of one ranked relevance list: mean of precision-at-each-hit."""
    hits = 0
    total = 0.0
    for rank, flag in enumerate(flags, start=1):
        if flag:
            hits += 1
            total += hits / rank
    if hits == 0:
        raise ValueError("average precision needs at least one relevant item")
    return total / hits


def map_score(groups: Sequence[Sequence[bool]]) -> float:
    """Mean AP over question groups (ranked relevance lists); groups with
    no relevant item are excluded, and an all-negative set is an error."""
    judged = [g for g in groups if any(g)]
    if not judged:
        raise ValueError("no question has a relevant answer")
    return sum(average_precision(g) for g in judged) / len(judged)


def mrr_score(groups: Sequence[Sequence[bool]]) -> float:
    """Mean reciprocal rank of the first relevant answer per question;
    exclusion/error rules match map_score."""
    judged = [g for g in groups if any(g)]
    if not judged:
        raise ValueError("no question has a relevant answer")
    total = 0.0
    for g in judged:
        rank = next(i for i, flag in enumerate(g, start=1) if flag)
        total += 1.0 / rank
    return total / len(judged)


@dataclass
class EvalReport:
    """Named metric values (all in [0, 1]) plus the instance count."""

    metrics: dict[str, float] = field(default_factory=dict)
    instances: int = 0

    def __post_init__(self) -> None:
        for name, value in self.metrics.items():
            if not 0.0 <= value <= 1.0 + 1e-12:
                raise ValueError(f"metric {name} = {value} outside [0, 1]")

    def render(self) -> str:
        """Aligned human-readable block."""
        width = max((len(n) for n in self.metrics), default=6)
        lines = [f"{name:<{width}}  {value:.4f}" for name, value in self.metrics.items()]
        lines.append(f"{'n':<{width}}  {self.instances}")
        return "\n".join(lines)

    def machine_lines(self) -> list[str]:
        """One ``metric<TAB>value`` line per metric, fixed 6-decimal format."""
        return [f"{name}\t{value:.6f}" for name, value in self.metrics.items()]
