from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np

from slogic.graph import FilterIndex, KnowledgeGraph, Vocabulary
from slogic.inference import AnswerVector


def expected_rank(scores: np.ndarray, target: int, filter_out: Iterable[int] = ()) -> float:
    """Mean position of ``target`` over uniformly random orderings of ties.

    With ``m`` candidates scoring strictly higher and ``n`` candidates
    (target included) sharing its score, the rank is ``m + (n + 1) / 2``.
    """
    filter_out = np.fromiter(filter_out, dtype=np.int64)
    if np.any(filter_out == target):
        raise ValueError("target entity must not be filtered")
    scores = np.asarray(scores, dtype=np.float64)
    keep = np.ones(len(scores), dtype=bool)
    keep[filter_out] = False
    s = scores[keep]
    ts = scores[target]
    higher = int(np.count_nonzero(s > ts))
    tied = int(np.count_nonzero(s == ts))
    return higher + (tied + 1) / 2


@dataclass
class Metrics:
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    num_queries: int
    fallback_count: int

    @classmethod
    def from_ranks(cls, ranks, fallback_count: int = 0) -> "Metrics":
        ranks = np.asarray(ranks, dtype=np.float64)
        if len(ranks) == 0:
            return cls(0.0, 0.0, 0.0, 0.0, 0, fallback_count)
        return cls(
            float(np.mean(1.0 / ranks)),
            float(np.mean(ranks <= 1)),
            float(np.mean(ranks <= 3)),
            float(np.mean(ranks <= 10)),
            len(ranks),
            fallback_count,
        )


@dataclass
class EvaluationResult:
    metrics: Metrics
    forward: Metrics
    inverse: Metrics
    ranks: list[tuple[int, int, int, float, bool]] = field(default_factory=list)  # h, r, target, rank, fallback

    def report(self, config: dict | None = None) -> dict:
        return {
            "all": asdict(self.metrics),
            "forward": asdict(self.forward),
            "inverse": asdict(self.inverse),
            "fallback_rate": self.metrics.fallback_count / max(self.metrics.num_queries, 1),
            "config": config or {},
        }

    def write_report(self, path, config: dict | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.report(config), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_ranks(self, path, vocab: Vocabulary) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for h, r, t, rank, fb in self.ranks:
                fh.write(f"{vocab.entity_names[h]}\t{vocab.relation_name(r)}\t{vocab.entity_names[t]}\t{rank!r}\t{int(fb)}\n")


def evaluate(
    answer_fn: Callable[[int, int], AnswerVector],
    test_triples: np.ndarray,
    all_splits: Iterable[np.ndarray],
    g: KnowledgeGraph,
) -> EvaluationResult:
    """Filtered MRR / Hits@k over ``(h, r, ?)`` and ``(t, inv(r), ?)`` per test triple."""
    filters = FilterIndex(all_splits, g.num_original_relations)
    per_dir = {True: [], False: []}
    fallbacks = {True: 0, False: 0}
    ranks = []
    for h, r, t in np.asarray(test_triples).reshape(-1, 3).tolist():
        for forward, (qh, qr, target) in ((True, (h, r, t)), (False, (t, g.inverse(r), h))):
            ans = answer_fn(qh, qr)
            rank = expected_rank(ans.scores, target, filters(qh, qr) - {target})
            per_dir[forward].append(rank)
            fallbacks[forward] += int(ans.used_fallback)
            ranks.append((qh, qr, target, rank, ans.used_fallback))
    return EvaluationResult(
        Metrics.from_ranks(per_dir[True] + per_dir[False], fallbacks[True] + fallbacks[False]),
        Metrics.from_ranks(per_dir[True], fallbacks[True]),
        Metrics.from_ranks(per_dir[False], fallbacks[False]),
        ranks,
    )
