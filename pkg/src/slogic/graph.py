"""Integer-indexed triple store with per-relation sparse adjacency.

Every original relation ``r`` in ``[0, R)`` gets an inverse ``r + R``;
building a graph adds ``(t, r + R, h)`` for every ``(h, r, t)``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from slogic.container import read_container, write_container

INVERSE_PREFIX = "inv:"
GRAPH_FORMAT_VERSION = 1


class TripleFormatError(ValueError):
    pass


@dataclass
class Vocabulary:
    entity_names: list[str] = field(default_factory=list)
    relation_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self._entity_ids = {name: i for i, name in enumerate(self.entity_names)}
        self._relation_ids = {name: i for i, name in enumerate(self.relation_names)}
        if len(self._entity_ids) != len(self.entity_names):
            raise ValueError("duplicate entity names")
        if len(self._relation_ids) != len(self.relation_names):
            raise ValueError("duplicate relation names")

    @property
    def num_entities(self) -> int:
        return len(self.entity_names)

    @property
    def num_relations(self) -> int:
        """Original relations only."""
        return len(self.relation_names)

    def copy(self) -> "Vocabulary":
        return Vocabulary(list(self.entity_names), list(self.relation_names))

    def add_entity(self, name: str) -> int:
        idx = self._entity_ids.get(name)
        if idx is None:
            idx = len(self.entity_names)
            self.entity_names.append(name)
            self._entity_ids[name] = idx
        return idx

    def add_relation(self, name: str) -> int:
        idx = self._relation_ids.get(name)
        if idx is None:
            if name.startswith(INVERSE_PREFIX):
                raise ValueError(f"relation name {name!r} collides with the inverse prefix")
            idx = len(self.relation_names)
            self.relation_names.append(name)
            self._relation_ids[name] = idx
        return idx

    def entity_id(self, name: str) -> int:
        return self._entity_ids[name]

    def relation_id(self, name: str) -> int:
        """Id of an original or inverse (``inv:``-prefixed) relation name."""
        if name.startswith(INVERSE_PREFIX):
            return self._relation_ids[name[len(INVERSE_PREFIX) :]] + self.num_relations
        return self._relation_ids[name]

    def relation_name(self, r: int) -> str:
        n = self.num_relations
        if r < n:
            return self.relation_names[r]
        return INVERSE_PREFIX + self.relation_names[r - n]

    def body_names(self, body: Sequence[int]) -> str:
        return ",".join(self.relation_name(r) for r in body)

    def parse_body(self, text: str) -> tuple[int, ...]:
        return tuple(self.relation_id(name) for name in text.split(","))


def load_triples(path, vocab: Vocabulary | None = None) -> tuple[np.ndarray, Vocabulary]:
    """Read a ``head<TAB>relation<TAB>tail`` file into an ``(n, 3)`` id array.

    With ``vocab=None`` a fresh vocabulary is built in first-seen order. A
    supplied vocabulary is copied and may gain new entities, but an unknown
    relation is an error.
    """
    fixed_relations = vocab is not None
    vocab = Vocabulary() if vocab is None else vocab.copy()
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise TripleFormatError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            h, r, t = parts
            if fixed_relations:
                try:
                    rid = vocab._relation_ids[r]
                except KeyError:
                    raise TripleFormatError(f"{path}:{lineno}: unknown relation {r!r}") from None
            else:
                try:
                    rid = vocab.add_relation(r)
                except ValueError as exc:
                    raise TripleFormatError(f"{path}:{lineno}: {exc}") from None
            rows.append((vocab.add_entity(h), rid, vocab.add_entity(t)))
    triples = np.array(rows, dtype=np.int64).reshape(-1, 3)
    return triples, vocab


def load_splits(train, valid=None, test=None) -> tuple[dict[str, np.ndarray], Vocabulary]:
    """Load train/valid/test sharing one vocabulary (relations fixed by train)."""
    splits = {}
    tr, vocab = load_triples(train)
    splits["train"] = tr
    for name, path in (("valid", valid), ("test", test)):
        if path is not None:
            splits[name], vocab = load_triples(path, vocab)
    return splits, vocab


def _dedup(triples: np.ndarray) -> np.ndarray:
    if len(triples) == 0:
        return triples.reshape(0, 3).astype(np.int64)
    _, first = np.unique(triples, axis=0, return_index=True)
    return triples[np.sort(first)]


class KnowledgeGraph:
    """Immutable augmented multi-relational graph.

    Attributes
    ----------
    original : (n, 3) int array
        Deduplicated original triples in first-seen order.
    triples : (2n, 3) int array
        ``original`` followed by the inverse triples.
    adjacency : list of scipy CSR matrices
        ``adjacency[r][h, t] == 1`` iff ``(h, r, t)`` is an edge; one per
        augmented relation.
    global_degree : (num_entities,) int array
        In-degree plus out-degree over original edges.
    """

    def __init__(self, num_entities: int, num_original_relations: int, original: np.ndarray):
        self.num_entities = int(num_entities)
        self.num_original_relations = int(num_original_relations)
        self.num_relations = 2 * self.num_original_relations
        original = _dedup(np.asarray(original, dtype=np.int64).reshape(-1, 3))
        if len(original) and (original[:, 1].max() >= self.num_original_relations or original[:, 1].min() < 0):
            raise ValueError("triples must reference original relations only")
        if len(original) and (original[:, [0, 2]].max() >= self.num_entities or original[:, [0, 2]].min() < 0):
            raise ValueError("entity id out of range")
        self.original = original
        inverse = np.stack(
            [original[:, 2], original[:, 1] + self.num_original_relations, original[:, 0]], axis=1
        )
        self.triples = np.concatenate([original, inverse]) if len(original) else original
        n = self.num_entities
        self.adjacency = []
        for r in range(self.num_relations):
            sel = self.triples[self.triples[:, 1] == r]
            m = sp.csr_matrix(
                (np.ones(len(sel), dtype=np.int8), (sel[:, 0], sel[:, 2])), shape=(n, n)
            )
            m.sum_duplicates()
            m.sort_indices()
            self.adjacency.append(m)
        order = np.lexsort((self.triples[:, 2], self.triples[:, 1], self.triples[:, 0])) if len(self.triples) else []
        srt = self.triples[order] if len(self.triples) else self.triples
        self.out_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(srt[:, 0], minlength=n), out=self.out_ptr[1:])
        self.out_rel = np.ascontiguousarray(srt[:, 1])
        self.out_dst = np.ascontiguousarray(srt[:, 2])
        self.global_degree = np.bincount(original[:, 0], minlength=n) + np.bincount(original[:, 2], minlength=n)
        self._neighbors = None

    def inverse(self, r: int) -> int:
        R = self.num_original_relations
        return r + R if r < R else r - R

    def out_edges(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """(relations, destinations) of every augmented edge leaving ``v``."""
        a, b = self.out_ptr[v], self.out_ptr[v + 1]
        return self.out_rel[a:b], self.out_dst[a:b]

    def in_edges(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """(relations, sources) of every augmented edge entering ``v``."""
        rels, srcs = self.out_edges(v)
        R = self.num_original_relations
        return np.where(rels < R, rels + R, rels - R), srcs

    def successors(self, v: int, r: int) -> np.ndarray:
        m = self.adjacency[r]
        return m.indices[m.indptr[v] : m.indptr[v + 1]]

    def neighbors(self, v: int) -> np.ndarray:
        """Sorted distinct neighbours of ``v`` in the undirected view."""
        if self._neighbors is None:
            self._neighbors = _unique_rows(self.out_ptr, self.out_dst)
        ptr, idx = self._neighbors
        return idx[ptr[v] : ptr[v + 1]]

    def step(self, frontier: np.ndarray, r: int) -> np.ndarray:
        """Distinct nodes reachable from any node of ``frontier`` via one ``r`` edge."""
        m = self.adjacency[r]
        return np.unique(_gather(m.indptr, m.indices, frontier))

    def has_edge(self, h: int, r: int, t: int) -> bool:
        succ = self.successors(h, r)
        i = np.searchsorted(succ, t)
        return bool(i < len(succ) and succ[i] == t)

    def save(self, path) -> None:
        write_container(
            path,
            "graph",
            GRAPH_FORMAT_VERSION,
            {"num_entities": self.num_entities, "num_original_relations": self.num_original_relations},
            {"original": self.original},
        )

    @classmethod
    def load(cls, path) -> "KnowledgeGraph":
        meta, arrays = read_container(path, "graph", GRAPH_FORMAT_VERSION)
        return cls(meta["num_entities"], meta["num_original_relations"], arrays["original"])


def _gather(indptr: np.ndarray, indices: np.ndarray, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64)
    starts = indptr[rows]
    lens = indptr[rows + 1] - starts
    total = int(lens.sum())
    if total == 0:
        return indices[:0]
    offsets = np.repeat(starts - np.cumsum(lens) + lens, lens)
    return indices[offsets + np.arange(total)]


def _unique_rows(ptr: np.ndarray, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(ptr) - 1
    src = np.repeat(np.arange(n), np.diff(ptr))
    pairs = np.unique(np.stack([src, idx], axis=1), axis=0) if len(idx) else np.zeros((0, 2), np.int64)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    out_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(pairs[:, 0], minlength=n), out=out_ptr[1:])
    return out_ptr, np.ascontiguousarray(pairs[:, 1])


def build_graph(triples: np.ndarray, vocab: Vocabulary) -> KnowledgeGraph:
    return KnowledgeGraph(vocab.num_entities, vocab.num_relations, triples)


def augment(triples: np.ndarray, num_original_relations: int) -> np.ndarray:
    """Triples followed by their inverses (no deduplication)."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    inv = np.stack([triples[:, 2], triples[:, 1] + num_original_relations, triples[:, 0]], axis=1)
    return np.concatenate([triples, inv])


class FilterIndex:
    """(head, relation) -> set of known tails over the augmented union of splits."""

    def __init__(self, splits: Iterable[np.ndarray], num_original_relations: int):
        self._tails: dict[tuple[int, int], set[int]] = defaultdict(set)
        for split in splits:
            for h, r, t in augment(split, num_original_relations).tolist():
                self._tails[(h, r)].add(t)

    def __call__(self, h: int, r: int) -> set[int]:
        return self._tails.get((h, r), set())


def known_tails(g: KnowledgeGraph, h: int, r: int, splits: Iterable[np.ndarray]) -> set[int]:
    return set(FilterIndex(splits, g.num_original_relations)(h, r))


def write_triples(path, triples: np.ndarray, vocab: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for h, r, t in np.asarray(triples).tolist():
            fh.write(f"{vocab.entity_names[h]}\t{vocab.relation_names[r]}\t{vocab.entity_names[t]}\n")


def read_vocab(path) -> Vocabulary:
    ents, rels = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        kind, _, name = line.partition("\t")
        (ents if kind == "E" else rels).append(name)
    return Vocabulary(ents, rels)


def write_vocab(path, vocab: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name in vocab.entity_names:
            fh.write(f"E\t{name}\n")
        for name in vocab.relation_names:
            fh.write(f"R\t{name}\n")
