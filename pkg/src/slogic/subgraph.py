"""Sampled k-hop neighbourhoods with topological node features.

Node features are ``[is_head, is_not_head, hop_distance, ln(1 + degree)]``;
none of them depends on entity identity, so a subgraph can be scored for
an entity never seen in training.
"""

from __future__ import annotations

from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from slogic.container import read_container, write_container
from slogic.graph import KnowledgeGraph

STORE_FORMAT_VERSION = 1
FEATURE_DIM = 4


@dataclass
class Subgraph:
    center: int
    nodes: np.ndarray  # global ids; local id = position, center first
    edges: np.ndarray  # (m, 3) local src, relation, local dst
    features: np.ndarray  # (n, 4) float32

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)


def entity_seed(seed: int, entity: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, entity]))


def bfs_distances(num_nodes: int, edges: np.ndarray, source: int = 0) -> np.ndarray:
    """Hop distance from ``source`` in the undirected view; -1 if unreachable."""
    adj = [[] for _ in range(num_nodes)]
    for u, _, v in edges.tolist():
        adj[u].append(v)
        adj[v].append(u)
    dist = np.full(num_nodes, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def node_features(dist: np.ndarray, degree: np.ndarray) -> np.ndarray:
    n = len(dist)
    feats = np.zeros((n, FEATURE_DIM), dtype=np.float32)
    feats[:, 1] = 1.0
    feats[0, 0], feats[0, 1] = 1.0, 0.0
    feats[:, 2] = dist
    feats[:, 3] = np.log1p(degree)
    return feats


def extract_subgraph(g: KnowledgeGraph, h: int, k: int, alpha: int, seed: int | np.random.Generator = 0) -> Subgraph:
    """k rounds of BFS over both edge directions from ``h``.

    A node with more than ``alpha`` distinct neighbours expands to ``alpha``
    of them drawn uniformly without replacement. The subgraph keeps every
    edge (both directions, all relations) between an expanded node and the
    neighbours it expanded to; distances are measured on those edges.
    """
    if k < 1 or alpha < 1:
        raise ValueError("k and alpha must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else entity_seed(seed, h)
    local = {h: 0}
    nodes = [h]
    edges = set()
    frontier = [h]
    for _ in range(k):
        nxt = []
        for v in frontier:
            nbrs = g.neighbors(v)
            if len(nbrs) > alpha:
                nbrs = np.sort(rng.choice(nbrs, size=alpha, replace=False))
            if len(nbrs) == 0:
                continue
            rels, dsts = g.out_edges(v)
            keep = np.isin(dsts, nbrs)
            for r, u in zip(rels[keep].tolist(), dsts[keep].tolist()):
                if u not in local:
                    local[u] = len(nodes)
                    nodes.append(u)
                    nxt.append(u)
                edges.add((local[v], r, local[u]))
                edges.add((local[u], g.inverse(r), local[v]))
        frontier = nxt
    edge_arr = np.array(sorted(edges), dtype=np.int64).reshape(-1, 3)
    node_arr = np.array(nodes, dtype=np.int64)
    dist = bfs_distances(len(nodes), edge_arr)
    return Subgraph(h, node_arr, edge_arr, node_features(dist, g.global_degree[node_arr]))


def remove_target_edge(sg: Subgraph, h: int, r: int, t: int, r_inv: int) -> Subgraph:
    """Drop ``(h, r, t)`` and ``(t, r_inv, h)`` (global ids); nodes and features stay."""
    if len(sg.edges) == 0:
        return sg
    src = sg.nodes[sg.edges[:, 0]]
    dst = sg.nodes[sg.edges[:, 2]]
    rel = sg.edges[:, 1]
    hit = ((src == h) & (rel == r) & (dst == t)) | ((src == t) & (rel == r_inv) & (dst == h))
    if not hit.any():
        return sg
    return replace(sg, edges=sg.edges[~hit])


class SubgraphStore:
    """One subgraph per entity, packed into flat arrays for random access."""

    def __init__(self, node_ptr, nodes, edge_ptr, edges, features, meta=None):
        self.node_ptr = node_ptr
        self.nodes = nodes
        self.edge_ptr = edge_ptr
        self.edges = edges
        self.features = features
        self.meta = meta or {}

    def __len__(self) -> int:
        return len(self.node_ptr) - 1

    def __getitem__(self, entity: int) -> Subgraph:
        a, b = self.node_ptr[entity], self.node_ptr[entity + 1]
        c, d = self.edge_ptr[entity], self.edge_ptr[entity + 1]
        return Subgraph(entity, self.nodes[a:b], self.edges[c:d], self.features[a:b])

    @classmethod
    def from_subgraphs(cls, subgraphs: list[Subgraph], meta=None) -> "SubgraphStore":
        node_ptr = np.zeros(len(subgraphs) + 1, dtype=np.int64)
        edge_ptr = np.zeros(len(subgraphs) + 1, dtype=np.int64)
        np.cumsum([s.num_nodes for s in subgraphs], out=node_ptr[1:])
        np.cumsum([len(s.edges) for s in subgraphs], out=edge_ptr[1:])
        cat = lambda xs, shape: np.concatenate(xs) if xs else np.zeros(shape)
        return cls(
            node_ptr,
            cat([s.nodes for s in subgraphs], (0,)).astype(np.int64),
            edge_ptr,
            cat([s.edges for s in subgraphs], (0, 3)).astype(np.int64),
            cat([s.features for s in subgraphs], (0, FEATURE_DIM)).astype(np.float32),
            meta,
        )

    def save(self, path) -> None:
        write_container(
            path,
            "subgraphs",
            STORE_FORMAT_VERSION,
            self.meta,
            {
                "node_ptr": self.node_ptr,
                "nodes": self.nodes,
                "edge_ptr": self.edge_ptr,
                "edges": self.edges,
                "features": self.features,
            },
        )

    @classmethod
    def load(cls, path) -> "SubgraphStore":
        meta, a = read_container(path, "subgraphs", STORE_FORMAT_VERSION)
        return cls(a["node_ptr"], a["nodes"], a["edge_ptr"], a["edges"], a["features"], meta)


_WORKER = {}


def _init(g, k, alpha, seed):
    _WORKER.update(g=g, k=k, alpha=alpha, seed=seed)


def _extract_range(entities):
    w = _WORKER
    return [extract_subgraph(w["g"], e, w["k"], w["alpha"], w["seed"]) for e in entities]


def extract_all(g: KnowledgeGraph, k: int, alpha: int, seed: int = 0, threads: int = 1) -> SubgraphStore:
    """Subgraph of every entity; entity ``e`` is sampled with seed ``(seed, e)``."""
    entities = list(range(g.num_entities))
    if threads <= 1:
        subgraphs = [extract_subgraph(g, e, k, alpha, seed) for e in entities]
    else:
        chunks = [c.tolist() for c in np.array_split(entities, threads * 4)]
        subgraphs = []
        with ProcessPoolExecutor(threads, initializer=_init, initargs=(g, k, alpha, seed)) as pool:
            for part in pool.map(_extract_range, chunks):
                subgraphs.extend(part)
    return SubgraphStore.from_subgraphs(subgraphs, {"k": k, "alpha": alpha, "seed": seed})
