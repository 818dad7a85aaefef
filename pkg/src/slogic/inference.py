"""Answering (h, r, ?) queries with dynamically weighted rules.

Candidates are the top-N (by Wilson) rules for ``r`` applicable from ``h``.
Their model scores become weights through a temperature softmax, each
rule's walk counts from ``h`` are squashed by ``tanh(count / tau)``, and the
answer vector is the weighted sum of the squashed counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from slogic.graph import KnowledgeGraph, Vocabulary, augment
from slogic.instances import TrieCache
from slogic.mining import RuleBase
from slogic.model import SLogicScorer, static_features
from slogic.subgraph import extract_subgraph

COUNT_CAP = 2**31 - 1


@dataclass(frozen=True)
class InferenceConfig:
    N: int = 50
    T: float = 0.5
    tau: float = 2.0
    fallback_on_empty: bool = False
    count_cap: int = COUNT_CAP

    def __post_init__(self):
        if self.N < 1 or self.T <= 0 or self.tau <= 0:
            raise ValueError("need N >= 1, T > 0, tau > 0")


@dataclass
class AnswerVector:
    scores: np.ndarray
    contributing_rules: list[tuple[int, float]] = field(default_factory=list)
    used_fallback: bool = False


def candidate_rules(g: KnowledgeGraph, rule_base: RuleBase, h: int, r: int, N: int, tries: TrieCache | None = None) -> list[int]:
    """Rule ids for ``r`` applicable from ``h``, best Wilson first, at most ``N``."""
    reach = (tries or TrieCache(rule_base))[r].walk(g, h)
    return [rid for rid in rule_base.for_relation(r) if rid in reach][:N]


def softmax_weights(phis: Sequence[float], T: float) -> np.ndarray:
    phis = np.asarray(phis, dtype=np.float64)
    if phis.size == 0 or T <= 0:
        raise ValueError("need at least one score and T > 0")
    z = (phis - phis.max()) / T
    w = np.exp(z)
    return w / w.sum()


def ground_rule(g: KnowledgeGraph, h: int, body: Sequence[int], cap: int = COUNT_CAP) -> np.ndarray:
    """Number of walks labelled ``body`` from ``h`` to every entity, saturating at ``cap``."""
    if len(body) == 0:
        raise ValueError("rule body must be non-empty")
    counts = np.zeros(g.num_entities, dtype=np.int64)
    counts[h] = 1
    for rel in body:
        counts = np.minimum(g.adjacency[rel].T @ counts, cap)
    return counts


def binarize(counts: np.ndarray, tau: float) -> np.ndarray:
    if tau <= 0:
        raise ValueError("tau must be positive")
    return np.tanh(np.asarray(counts, dtype=np.float64) / tau)


class FallbackTable:
    """Per-relation tail frequencies over the augmented training triples."""

    def __init__(self, train_triples: np.ndarray, num_entities: int, num_original_relations: int):
        aug = augment(train_triples, num_original_relations)
        self.num_entities = num_entities
        self.counts = {
            r: np.bincount(aug[aug[:, 1] == r, 2], minlength=num_entities).astype(np.float64)
            for r in range(2 * num_original_relations)
        }

    def __call__(self, r: int) -> np.ndarray:
        vec = self.counts.get(r)
        return np.zeros(self.num_entities) if vec is None else vec.copy()


def fallback_scores(r: int, train_triples: np.ndarray, num_entities: int, num_original_relations: int) -> np.ndarray:
    return FallbackTable(train_triples, num_entities, num_original_relations)(r)


class LazySubgraphs:
    """Extracts subgraphs on demand with the same per-entity seeds as ``extract_all``."""

    def __init__(self, g: KnowledgeGraph, k: int, alpha: int, seed: int = 0):
        self.g, self.k, self.alpha, self.seed = g, k, alpha, seed
        self._cache = {}

    def __getitem__(self, entity: int):
        sg = self._cache.get(entity)
        if sg is None:
            sg = self._cache[entity] = extract_subgraph(self.g, entity, self.k, self.alpha, self.seed)
        return sg


def _aggregate(g, rule_base, h, cands, weights, cfg) -> AnswerVector:
    scores = np.zeros(g.num_entities)
    for rid, w in zip(cands, weights):
        scores += w * binarize(ground_rule(g, h, rule_base.rules[rid].body, cfg.count_cap), cfg.tau)
    return AnswerVector(scores, [(rid, float(w)) for rid, w in zip(cands, weights)])


class QueryEngine:
    """Answers queries against a fixed training graph and rule base.

    ``model=None`` gives the static baseline: Wilson scores replace the
    model scores before the softmax, everything else is unchanged.
    """

    def __init__(
        self,
        g: KnowledgeGraph,
        rule_base: RuleBase,
        fallback: FallbackTable,
        cfg: InferenceConfig = InferenceConfig(),
        model: SLogicScorer | None = None,
        subgraphs=None,
    ):
        if model is not None and subgraphs is None:
            raise ValueError("a model needs a subgraph source")
        self.g, self.rule_base, self.fallback, self.cfg = g, rule_base, fallback, cfg
        self.model, self.subgraphs = model, subgraphs
        self.tries = TrieCache(rule_base)

    def seen(self, h: int) -> bool:
        return h < self.g.num_entities and self.g.global_degree[h] > 0

    def rule_scores(self, h: int, r: int, cands: Sequence[int]) -> np.ndarray:
        stats = [self.rule_base.stats[i] for i in cands]
        if self.model is None:
            return np.array([s.wilson for s in stats])
        bodies = [self.rule_base.rules[i].body for i in cands]
        return self.model.score_rules(self.subgraphs[h], r, bodies, [static_features(s) for s in stats])

    def __call__(self, h: int, r: int) -> AnswerVector:
        if not self.seen(h):
            return AnswerVector(self.fallback(r), used_fallback=True)
        cands = candidate_rules(self.g, self.rule_base, h, r, self.cfg.N, self.tries)
        if not cands:
            if self.cfg.fallback_on_empty:
                return AnswerVector(self.fallback(r), used_fallback=True)
            return AnswerVector(np.zeros(self.g.num_entities))
        weights = softmax_weights(self.rule_scores(h, r, cands), self.cfg.T)
        return _aggregate(self.g, self.rule_base, h, cands, weights, self.cfg)


def answer_query(model, g, rule_base, h, r, cfg, subgraphs, fallback: FallbackTable) -> AnswerVector:
    return QueryEngine(g, rule_base, fallback, cfg, model, subgraphs)(h, r)


def static_answer_query(g, rule_base, h, r, cfg, fallback: FallbackTable) -> AnswerVector:
    return QueryEngine(g, rule_base, fallback, cfg)(h, r)


def write_answers(path, queries, answer_fn: Callable[[int, int], AnswerVector], vocab: Vocabulary, rule_base: RuleBase, top_k: int = 10) -> None:
    """Human-readable dump of top answers and the rules behind them."""
    with open(path, "w", encoding="utf-8") as fh:
        for h, r in queries:
            ans = answer_fn(h, r)
            fh.write(f"query\t{vocab.entity_names[h]}\t{vocab.relation_name(r)}\tfallback={int(ans.used_fallback)}\n")
            order = np.argsort(-ans.scores, kind="stable")[:top_k]
            for rank, e in enumerate(order.tolist(), start=1):
                fh.write(f"answer\t{rank}\t{vocab.entity_names[e]}\t{float(ans.scores[e])!r}\n")
            for rid, w in ans.contributing_rules:
                fh.write(f"rule\t{vocab.body_names(rule_base.rules[rid].body)}\t{w!r}\n")
