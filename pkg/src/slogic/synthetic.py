"""Small generated knowledge graphs with known ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from slogic.graph import Vocabulary, write_triples


@dataclass
class SyntheticKG:
    vocab: Vocabulary
    splits: dict[str, np.ndarray]
    info: dict = field(default_factory=dict)

    def write(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, triples in self.splits.items():
            write_triples(directory / f"{name}.txt", triples, self.vocab)


class _Builder:
    def __init__(self):
        self.vocab = Vocabulary()
        self.rows: dict[str, list] = {"train": [], "valid": [], "test": []}

    def rel(self, name: str) -> int:
        return self.vocab.add_relation(name)

    def ent(self, name: str) -> int:
        return self.vocab.add_entity(name)

    def add(self, split: str, h: str, r: str, t: str) -> None:
        self.rows[split].append((self.ent(h), self.rel(r), self.ent(t)))

    def build(self, info) -> SyntheticKG:
        splits = {k: np.array(v, dtype=np.int64).reshape(-1, 3) for k, v in self.rows.items()}
        return SyntheticKG(self.vocab, splits, info)


def planted_rule_kg(num_entities: int = 100, seed: int = 0, test_fraction: float = 0.25, noise_edges: int = 60) -> SyntheticKG:
    """``r2(x, z)`` holds exactly when ``r0(x, y)`` and ``r1(y, z)`` for some ``y``.

    Entities split 40/30/30 into sources, middles and targets; ``r0`` maps
    each source to one middle and ``r1`` each middle to one target, so each
    source has a single ``r2`` answer. A fraction of the ``r2`` facts is held
    out for test; ``noise`` edges are uniform random.
    """
    rng = np.random.default_rng(seed)
    n_src = int(num_entities * 0.4)
    n_mid = int(num_entities * 0.3)
    n_tgt = num_entities - n_src - n_mid
    src = [f"s{i}" for i in range(n_src)]
    mid = [f"m{i}" for i in range(n_mid)]
    tgt = [f"t{i}" for i in range(n_tgt)]
    b = _Builder()
    for name in ("r0", "r1", "r2", "noise"):
        b.rel(name)
    for e in src + mid + tgt:
        b.ent(e)
    r1_map = {m: tgt[rng.integers(n_tgt)] for m in mid}
    r0_map = {s: mid[rng.integers(n_mid)] for s in src}
    for m, t in r1_map.items():
        b.add("train", m, "r1", t)
    for s, m in r0_map.items():
        b.add("train", s, "r0", m)
    order = rng.permutation(n_src)
    n_test = max(1, int(round(test_fraction * n_src)))
    n_valid = max(1, n_test // 2)
    for rank, i in enumerate(order.tolist()):
        s = src[i]
        split = "test" if rank < n_test else "valid" if rank < n_test + n_valid else "train"
        b.add(split, s, "r2", r1_map[r0_map[s]])
    names = src + mid + tgt
    seen = set()
    while len(seen) < noise_edges:
        x, y = rng.integers(num_entities, size=2)
        if x != y and (x, y) not in seen:
            seen.add((x, y))
            b.add("train", names[x], "noise", names[y])
    return b.build({"query_relation": "r2"})


def two_cluster_kg(
    n_a: int = 150,
    n_b: int = 180,
    n_shared: int = 250,
    test_fraction: float = 0.3,
    markers_per_cluster: int = 3,
    seed: int = 0,
) -> SyntheticKG:
    """Relation ``q`` is predicted by ``[a1, a2]`` for cluster-A heads and ``[b1, b2]`` for cluster B.

    Every head has both an a-path and a b-path to distinct endpoints; only
    the cluster's own path reaches the true ``q`` tail. Cluster membership
    is visible in the head's neighbourhood through an ``mA`` or ``mB`` edge
    to a marker entity. Shared heads have both paths converge on the true
    tail, which lifts the global confidence of both rules; they carry an
    ``mN`` marker. Test facts are drawn from cluster A and B heads only.
    """
    rng = np.random.default_rng(seed)
    b = _Builder()
    for name in ("q", "a1", "a2", "b1", "b2", "mA", "mB", "mN"):
        b.rel(name)
    clusters = ["A"] * n_a + ["B"] * n_b + ["S"] * n_shared
    heads = {"A": [], "B": []}
    marker_rel = {"A": "mA", "B": "mB", "S": "mN"}
    test_heads = {"A": set(), "B": set()}
    for c in ("A", "B"):
        n = n_a if c == "A" else n_b
        k = int(round(test_fraction * n))
        test_heads[c] = set(rng.choice(n, size=k, replace=False).tolist())
    counters = {"A": 0, "B": 0, "S": 0}
    for c in clusters:
        i = counters[c]
        counters[c] += 1
        h = f"{c}{i}"
        ya, yb = f"{h}_ya", f"{h}_yb"
        ta, tb = f"{h}_ta", f"{h}_tb"
        if c == "S":
            tb = ta
        b.add("train", h, "a1", ya)
        b.add("train", ya, "a2", ta)
        b.add("train", h, "b1", yb)
        b.add("train", yb, "b2", tb)
        marker = f"marker_{c}{rng.integers(markers_per_cluster)}"
        b.add("train", h, marker_rel[c], marker)
        answer = ta if c in ("A", "S") else tb
        split = "train"
        if c in ("A", "B"):
            heads[c].append(h)
            if i in test_heads[c]:
                split = "test"
        b.add(split, h, "q", answer)
    kg = b.build({"query_relation": "q", "rule_a": ("a1", "a2"), "rule_b": ("b1", "b2")})
    v = kg.vocab
    kg.info["cluster_of"] = {v.entity_id(h): c for c in ("A", "B") for h in heads[c]}
    return kg


def mini_kg(seed: int = 0) -> SyntheticKG:
    """Bundled end-to-end example: a two-cluster KG small enough for a fast pipeline run."""
    return two_cluster_kg(n_a=60, n_b=70, n_shared=100, seed=seed)
