"""Horn rule mining and static rule statistics.

A rule ``r_h <- (b_1, ..., b_k)`` states that ``r_h(x, y)`` is likely when a
walk labelled ``b_1 ... b_k`` leads from ``x`` to ``y``. Candidates come from
simple paths between the endpoints of training triples; their quality is
measured on distinct entity pairs (boolean chain products).
"""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from slogic.graph import KnowledgeGraph, Vocabulary

log = logging.getLogger(__name__)

RULES_HEADER = "# slogic-rules v1"


class Rule(NamedTuple):
    head: int
    body: tuple[int, ...]


@dataclass(frozen=True)
class RuleStats:
    support: int
    body_count: int
    confidence: float
    laplace: float
    wilson: float
    z: float = 1.96


def wilson_lower(p: float, n: int, z: float = 1.96) -> float:
    """Lower end of the Wilson score interval for a proportion ``p`` over ``n`` trials.

    Returns 0 for ``n == 0``. The result is clipped to ``[0, p]`` so that
    floating point rounding never violates the interval's containment of
    the point estimate (e.g. ``p = 0`` gives exactly 0).
    """
    if n <= 0:
        return 0.0
    z2n = z * z / n
    value = (p + z2n / 2 - z * math.sqrt(p * (1 - p) / n + z2n / (4 * n))) / (1 + z2n)
    return min(max(value, 0.0), p)


def laplace_confidence(support: int, body_count: int) -> float:
    return (support + 1) / (body_count + 2)


# --------------------------------------------------------------------------
# simple path enumeration
# --------------------------------------------------------------------------


def _adjacency_lists(g: KnowledgeGraph) -> list[list[tuple[int, int]]]:
    cached = getattr(g, "_py_out", None)
    if cached is None:
        rels, dsts = g.out_rel.tolist(), g.out_dst.tolist()
        ptr = g.out_ptr.tolist()
        cached = [list(zip(rels[ptr[v] : ptr[v + 1]], dsts[ptr[v] : ptr[v + 1]])) for v in range(g.num_entities)]
        g._py_out = cached
    return cached


def enumerate_simple_paths(
    g: KnowledgeGraph, h: int, t: int, max_len: int, exclude: Iterable[tuple[int, int, int]] = ()
) -> set[tuple[int, ...]]:
    """Relational paths of all simple paths ``h -> t`` with at most ``max_len`` edges.

    Edges listed in ``exclude`` (as ``(src, rel, dst)``) are not traversable.
    Works meet-in-the-middle: forward halves from ``h`` of ``ceil(l/2)``
    edges are joined with backward halves into ``t`` on their shared node.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if h == t:
        return set()
    out = _adjacency_lists(g)
    R = g.num_original_relations
    exclude = set(exclude)
    fwd_depth = (max_len + 1) // 2
    bwd_depth = max_len // 2

    # forward[a][m] -> list of (nodes, rels); never extended past t
    forward = [defaultdict(list) for _ in range(fwd_depth + 1)]
    forward[0][h].append(((h,), ()))
    for a in range(fwd_depth):
        for m, partials in forward[a].items():
            if m == t:
                continue
            for nodes, rels in partials:
                for r, v in out[m]:
                    if v in nodes or (m, r, v) in exclude:
                        continue
                    forward[a + 1][v].append((nodes + (v,), rels + (r,)))

    # backward[b][m] -> list of (nodes, rels) for paths m -> ... -> t; never through h
    backward = [defaultdict(list) for _ in range(bwd_depth + 1)]
    backward[0][t].append(((t,), ()))
    for b in range(bwd_depth):
        for m, partials in backward[b].items():
            for nodes, rels in partials:
                for r, x in out[m]:
                    # augmented edge m -r-> x implies x -inv(r)-> m
                    r_in = r + R if r < R else r - R
                    if x == h or x in nodes or (x, r_in, m) in exclude:
                        continue
                    backward[b + 1][x].append(((x,) + nodes, (r_in,) + rels))

    found: set[tuple[int, ...]] = set()
    for length in range(1, max_len + 1):
        a = (length + 1) // 2
        b = length - a
        fa, bb = forward[a], backward[b]
        for m in fa.keys() & bb.keys():
            for f_nodes, f_rels in fa[m]:
                f_set = set(f_nodes)
                for b_nodes, b_rels in bb[m]:
                    if len(f_set.intersection(b_nodes)) == 1:
                        found.add(f_rels + b_rels)
    return found


def invert_body(body: Sequence[int], num_original_relations: int) -> tuple[int, ...]:
    """Body of the reversed path: ``(b1..bk) -> (inv bk .. inv b1)``."""
    R = num_original_relations
    return tuple(r + R if r < R else r - R for r in reversed(body))


def _mine_chunk(g: KnowledgeGraph, rows: np.ndarray, max_len: int) -> Counter:
    counts: Counter = Counter()
    R = g.num_original_relations
    for h, r, t in rows.tolist():
        excl = ((h, r, t), (t, r + R, h))
        for body in enumerate_simple_paths(g, h, t, max_len, excl):
            counts[Rule(r, body)] += 1
            counts[Rule(r + R, invert_body(body, R))] += 1
    return counts


_WORKER_GRAPH: KnowledgeGraph | None = None


def _init_worker(g):
    global _WORKER_GRAPH
    _WORKER_GRAPH = g


def _mine_worker(args):
    rows, max_len = args
    return _mine_chunk(_WORKER_GRAPH, rows, max_len)


def sample_triples(g: KnowledgeGraph, sample_fraction: float, seed: int) -> np.ndarray:
    if not 0 < sample_fraction <= 1:
        raise ValueError("sample_fraction must be in (0, 1]")
    n = len(g.original)
    if sample_fraction >= 1 or n == 0:
        return g.original
    size = max(1, int(round(sample_fraction * n)))
    idx = np.sort(np.random.default_rng(seed).choice(n, size=size, replace=False))
    return g.original[idx]


def mine_rules(
    g: KnowledgeGraph, L: int, sample_fraction: float = 1.0, seed: int = 0, threads: int = 1
) -> Counter:
    """Multiset of candidate rules ``(head, body)`` mined from training triples.

    Each sampled original triple ``(h, r, t)`` is explained by the simple
    paths ``h -> t`` that avoid the triple's own edge pair; every path also
    yields the mirrored rule for ``inv(r)``, which is what mining the inverse
    triple would produce.
    """
    rows = sample_triples(g, sample_fraction, seed)
    if threads <= 1 or len(rows) < 2 * threads:
        return _mine_chunk(g, rows, L)
    chunks = np.array_split(rows, threads * 4)
    total: Counter = Counter()
    with ProcessPoolExecutor(threads, initializer=_init_worker, initargs=(g,)) as pool:
        for part in pool.map(_mine_worker, [(c, L) for c in chunks]):
            total.update(part)
    return total


# --------------------------------------------------------------------------
# pair statistics
# --------------------------------------------------------------------------


def _binary(m: sp.csr_matrix) -> sp.csr_matrix:
    m = m.tocsr()
    m.data = np.ones_like(m.data, dtype=np.int32)
    return m


def path_matrix(g: KnowledgeGraph, body: Sequence[int], prefix: sp.csr_matrix | None = None) -> sp.csr_matrix:
    """Boolean pattern of entity pairs joined by at least one walk labelled ``body``."""
    if len(body) == 0:
        raise ValueError("body must be non-empty")
    start = 0
    if prefix is None:
        prefix = _binary(g.adjacency[body[0]].astype(np.int32))
        start = 1
    for r in body[start:]:
        prefix = _binary(prefix @ g.adjacency[r])
    return prefix


def body_count(g: KnowledgeGraph, body: Sequence[int]) -> int:
    return int(path_matrix(g, body).nnz)


def support(g: KnowledgeGraph, body: Sequence[int], head_relation: int) -> int:
    return int(path_matrix(g, body).multiply(g.adjacency[head_relation]).nnz)


class RuleBase:
    """Deduplicated rules with their statistics and a per-head Wilson index.

    ``index[r]`` lists rule ids for head relation ``r`` by descending Wilson,
    then descending support, then shorter body, then lexicographic body.
    """

    def __init__(self, rules: list[Rule], stats: list[RuleStats]):
        self.rules = rules
        self.stats = stats
        self.index: dict[int, list[int]] = defaultdict(list)
        for i, rule in enumerate(rules):
            self.index[rule.head].append(i)
        for ids in self.index.values():
            ids.sort(key=self._sort_key)
        self.index = dict(self.index)
        self._lookup = {rule: i for i, rule in enumerate(rules)}

    def _sort_key(self, i: int):
        s, body = self.stats[i], self.rules[i].body
        return (-s.wilson, -s.support, len(body), body)

    def __len__(self) -> int:
        return len(self.rules)

    def for_relation(self, r: int) -> list[int]:
        return self.index.get(r, [])

    def find(self, head: int, body: Sequence[int]) -> int | None:
        return self._lookup.get(Rule(head, tuple(body)))

    def save(self, path, vocab: Vocabulary) -> None:
        z = self.stats[0].z if self.stats else 1.96
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{RULES_HEADER} z={z!r}\n")
            for head in sorted(self.index):
                for i in self.index[head]:
                    rule, s = self.rules[i], self.stats[i]
                    fh.write(
                        f"{vocab.relation_name(rule.head)}\t{vocab.body_names(rule.body)}\t"
                        f"{s.support}\t{s.body_count}\t{s.confidence!r}\t{s.laplace!r}\t{s.wilson!r}\n"
                    )

    @classmethod
    def load(cls, path, vocab: Vocabulary) -> "RuleBase":
        rules, stats = [], []
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
            if not first.startswith(RULES_HEADER):
                raise ValueError(f"{path}: not a rule-base file")
            z = float(first.split("z=")[1])
            for line in fh:
                head, body, sup, cnt, conf, lap, wil = line.rstrip("\n").split("\t")
                rules.append(Rule(vocab.relation_id(head), vocab.parse_body(body)))
                stats.append(RuleStats(int(sup), int(cnt), float(conf), float(lap), float(wil), z))
        return cls(rules, stats)


def compute_stats(sup: int, cnt: int, z: float) -> RuleStats:
    conf = sup / cnt if cnt > 0 else 0.0
    return RuleStats(sup, cnt, conf, laplace_confidence(sup, cnt), wilson_lower(conf, cnt, z), z)


def build_rule_base(
    candidates: Iterable[Rule | tuple[int, Sequence[int]]],
    g: KnowledgeGraph,
    z: float = 1.96,
    min_body_count: int = 1,
) -> RuleBase:
    """Deduplicate candidates, measure them on ``g`` and index them.

    Bodies are processed in lexicographic order so each prefix product is
    computed once and shared by all bodies extending it.
    """
    heads_by_body: dict[tuple[int, ...], set[int]] = defaultdict(set)
    for head, body in candidates:
        heads_by_body[tuple(body)].add(int(head))
    rules, stats = [], []
    stack: list[tuple[tuple[int, ...], sp.csr_matrix]] = []
    for body in sorted(heads_by_body):
        while stack and body[: len(stack[-1][0])] != stack[-1][0]:
            stack.pop()
        for depth in range(len(stack[-1][0]) if stack else 0, len(body)):
            prefix = stack[-1][1] if stack else None
            stack.append((body[: depth + 1], path_matrix(g, body[depth : depth + 1], prefix=prefix)))
        matrix = stack[-1][1]
        cnt = int(matrix.nnz)
        if cnt < min_body_count:
            continue
        for head in sorted(heads_by_body[body]):
            sup = int(matrix.multiply(g.adjacency[head]).nnz)
            rules.append(Rule(head, body))
            stats.append(compute_stats(sup, cnt, z))
    log.info("rule base: %d rules over %d bodies", len(rules), len(heads_by_body))
    return RuleBase(rules, stats)
