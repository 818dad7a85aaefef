"""Rule-enriched training instances: positive rule bodies and hard negatives.

For a triple ``(h, r, t)`` a positive is a rule for ``r`` whose body grounds
from ``h`` to ``t``; a hard negative is one of the top-K (by Wilson score)
rules for ``r`` that ground from ``h`` but miss ``t``. All grounding here
runs with the triple's own edge pair removed.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from slogic.graph import KnowledgeGraph, Vocabulary
from slogic.mining import RuleBase

Edge = tuple[int, int, int]


def _step(g: KnowledgeGraph, frontier: np.ndarray, rel: int, exclude: Sequence[Edge]) -> np.ndarray:
    blocked = [(u, v) for u, r, v in exclude if r == rel]
    if not blocked:
        return g.step(frontier, rel)
    parts = []
    rest = frontier
    for u, v in blocked:
        i = np.searchsorted(rest, u)
        if i < len(rest) and rest[i] == u:
            rest = np.delete(rest, i)
            succ = g.successors(u, rel)
            parts.append(succ[succ != v])
    parts.append(g.step(rest, rel))
    return np.unique(np.concatenate(parts))


def reachable(g: KnowledgeGraph, h: int, body: Sequence[int], exclude: Sequence[Edge] = ()) -> np.ndarray:
    """Sorted end nodes of walks from ``h`` labelled ``body``."""
    if len(body) == 0:
        raise ValueError("rule body must be non-empty")
    frontier = np.array([h], dtype=np.int64)
    for rel in body:
        frontier = _step(g, frontier, rel, exclude)
        if len(frontier) == 0:
            break
    return frontier


def locally_applicable(g: KnowledgeGraph, h: int, body: Sequence[int], exclude: Sequence[Edge] = ()) -> bool:
    return len(reachable(g, h, body, exclude)) > 0


def _contains(sorted_arr: np.ndarray, x: int) -> bool:
    i = np.searchsorted(sorted_arr, x)
    return bool(i < len(sorted_arr) and sorted_arr[i] == x)


def target_exclusion(g: KnowledgeGraph, h: int, r: int, t: int) -> tuple[Edge, Edge]:
    return ((h, r, t), (t, g.inverse(r), h))


class _TrieNode:
    __slots__ = ("children", "rules")

    def __init__(self):
        self.children: dict[int, _TrieNode] = {}
        self.rules: list[int] = []


class BodyTrie:
    """Prefix tree over the bodies of one head relation's rules."""

    def __init__(self, rule_base: RuleBase, relation: int):
        self.root = _TrieNode()
        for rid in rule_base.for_relation(relation):
            node = self.root
            for rel in rule_base.rules[rid].body:
                node = node.children.setdefault(rel, _TrieNode())
            node.rules.append(rid)

    def walk(self, g: KnowledgeGraph, h: int, exclude: Sequence[Edge] = ()) -> dict[int, np.ndarray]:
        """Reached node sets for every rule applicable from ``h`` (others absent)."""
        out: dict[int, np.ndarray] = {}
        stack = [(self.root, np.array([h], dtype=np.int64))]
        while stack:
            node, frontier = stack.pop()
            for rel, child in node.children.items():
                nxt = _step(g, frontier, rel, exclude)
                if len(nxt) == 0:
                    continue
                for rid in child.rules:
                    out[rid] = nxt
                if child.children:
                    stack.append((child, nxt))
        return out


class TrieCache:
    def __init__(self, rule_base: RuleBase):
        self.rule_base = rule_base
        self._tries: dict[int, BodyTrie] = {}

    def __getitem__(self, relation: int) -> BodyTrie:
        trie = self._tries.get(relation)
        if trie is None:
            trie = self._tries[relation] = BodyTrie(self.rule_base, relation)
        return trie


@dataclass(frozen=True)
class NegativePoolConfig:
    K: int = 100
    k_neg: int = 20
    seed: int = 0

    def __post_init__(self):
        if not self.K >= self.k_neg >= 1:
            raise ValueError("need K >= k_neg >= 1")


@dataclass
class TrainingPair:
    """One positive rule for a triple together with its hard negatives (rule ids)."""

    triple: tuple[int, int, int]
    positive: int
    negatives: list[int]


def _sample(ids: list[int], k: int, rng: np.random.Generator) -> list[int]:
    if len(ids) <= k:
        return list(ids)
    return [ids[i] for i in rng.choice(len(ids), size=k, replace=False)]


def _split_rules(rule_base: RuleBase, r: int, t: int, reach: dict[int, np.ndarray], K: int):
    positives, pool = [], []
    for rid in rule_base.for_relation(r):
        nodes = reach.get(rid)
        if nodes is None:
            continue
        hits_t = _contains(nodes, t)
        if hits_t:
            positives.append(rid)
        if len(pool) < K:
            pool.append((rid, hits_t))
    negatives = [rid for rid, hits_t in pool if not hits_t]
    return positives, negatives


def positive_bodies(g, h, r, t, rule_base: RuleBase, k_pos: int, seed: int | np.random.Generator = 0, tries=None):
    """Up to ``k_pos`` distinct rule ids for ``r`` grounding ``h -> t`` without the target edge."""
    rng = np.random.default_rng(seed)
    trie = (tries or TrieCache(rule_base))[r]
    reach = trie.walk(g, h, target_exclusion(g, h, r, t))
    positives, _ = _split_rules(rule_base, r, t, reach, 0)
    return _sample(positives, k_pos, rng)


def hard_negatives(g, h, r, t, rule_base: RuleBase, cfg: NegativePoolConfig, rng=None, tries=None):
    """Rule ids from the top-``K`` applicable pool for ``(h, r)`` that miss ``t``."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    trie = (tries or TrieCache(rule_base))[r]
    reach = trie.walk(g, h, target_exclusion(g, h, r, t))
    _, negatives = _split_rules(rule_base, r, t, reach, cfg.K)
    return _sample(negatives, cfg.k_neg, rng)


@dataclass
class GenerationStats:
    triples: int = 0
    no_positive: int = 0
    no_negative: int = 0
    records: int = 0
    pairs: int = 0
    max_records_per_triple: int = 0
    max_negatives_per_record: int = 0

    def merge(self, other: "GenerationStats") -> None:
        for name in ("triples", "no_positive", "no_negative", "records", "pairs"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.max_records_per_triple = max(self.max_records_per_triple, other.max_records_per_triple)
        self.max_negatives_per_record = max(self.max_negatives_per_record, other.max_negatives_per_record)


def instances_for_triple(g, rule_base, tries, index, triple, k_pos, k_neg, K, seed, stats) -> list[TrainingPair]:
    h, r, t = triple
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    reach = tries[r].walk(g, h, target_exclusion(g, h, r, t))
    positives, negatives = _split_rules(rule_base, r, t, reach, K)
    stats.triples += 1
    if not positives:
        stats.no_positive += 1
        return []
    chosen = _sample(positives, k_pos, rng)
    negs = _sample(negatives, k_neg, rng)
    if not negs:
        stats.no_negative += 1
        return []
    out = [TrainingPair((h, r, t), pos, list(negs)) for pos in chosen]
    stats.records += len(out)
    stats.pairs += len(out) * len(negs)
    stats.max_records_per_triple = max(stats.max_records_per_triple, len(out))
    stats.max_negatives_per_record = max(stats.max_negatives_per_record, len(negs))
    return out


_WORKER = {}


def _init(g, rule_base, args):
    _WORKER.update(g=g, rule_base=rule_base, tries=TrieCache(rule_base), args=args)


def _run_chunk(chunk):
    w = _WORKER
    stats = GenerationStats()
    out = []
    for index, triple in chunk:
        out.extend(instances_for_triple(w["g"], w["rule_base"], w["tries"], index, triple, *w["args"], stats))
    return out, stats


def generate(
    g: KnowledgeGraph,
    rule_base: RuleBase,
    k_pos: int = 5,
    k_neg: int = 20,
    K: int = 100,
    seed: int = 0,
    triples: np.ndarray | None = None,
    stats: GenerationStats | None = None,
    threads: int = 1,
) -> Iterator[TrainingPair]:
    """Stream one record per (triple, positive) in triple order.

    ``triples`` defaults to every augmented training triple, so inverse
    relations get instances too. Triple ``i`` draws from seed ``(seed, i)``,
    which keeps the stream identical for any thread count.
    """
    NegativePoolConfig(K, k_neg, seed)
    stats = GenerationStats() if stats is None else stats
    rows = g.triples if triples is None else np.asarray(triples).reshape(-1, 3)
    indexed = list(enumerate(map(tuple, rows.tolist())))
    if threads <= 1:
        tries = TrieCache(rule_base)
        for index, triple in indexed:
            yield from instances_for_triple(g, rule_base, tries, index, triple, k_pos, k_neg, K, seed, stats)
        return
    chunk_size = max(1, min(2048, len(indexed) // (threads * 4) or 1))
    chunks = [indexed[i : i + chunk_size] for i in range(0, len(indexed), chunk_size)]
    with ProcessPoolExecutor(threads, initializer=_init, initargs=(g, rule_base, (k_pos, k_neg, K, seed))) as pool:
        for out, part in pool.map(_run_chunk, chunks):
            stats.merge(part)
            yield from out


def write_instances(path, pairs: Iterable[TrainingPair], vocab: Vocabulary, rule_base: RuleBase) -> int:
    """Stream records as ``h, r, t, positive body, |negatives|, negatives`` TSV."""
    n = 0
    names = vocab.entity_names
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            h, r, t = p.triple
            negs = ";".join(vocab.body_names(rule_base.rules[i].body) for i in p.negatives)
            fh.write(
                f"{names[h]}\t{vocab.relation_name(r)}\t{names[t]}\t"
                f"{vocab.body_names(rule_base.rules[p.positive].body)}\t{len(p.negatives)}\t{negs}\n"
            )
            n += 1
    return n


def read_instances(path, vocab: Vocabulary, rule_base: RuleBase) -> Iterator[TrainingPair]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            h, r, t, pos, count, negs = line.rstrip("\n").split("\t")
            rid = vocab.relation_id(r)

            def lookup(body_text):
                idx = rule_base.find(rid, vocab.parse_body(body_text))
                if idx is None:
                    raise ValueError(f"{path}:{lineno}: rule {r} <- {body_text} missing from rule base")
                return idx

            neg_ids = [lookup(b) for b in negs.split(";")] if negs else []
            if len(neg_ids) != int(count):
                raise ValueError(f"{path}:{lineno}: negative count mismatch")
            yield TrainingPair((vocab.entity_id(h), rid, vocab.entity_id(t)), lookup(pos), neg_ids)
