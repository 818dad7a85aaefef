"""Brute-force reference implementations used as test oracles.

Everything here works on plain Python edge lists so it shares no code
with the package under test.
"""

from __future__ import annotations

from collections import defaultdict

import numpy as np
import torch


def augmented_edges(triples, R):
    edges = set()
    for h, r, t in np.asarray(triples).reshape(-1, 3).tolist():
        edges.add((h, r, t))
        edges.add((t, r + R, h))
    return edges


def out_lists(edges):
    out = defaultdict(list)
    for h, r, t in sorted(edges):
        out[h].append((r, t))
    return out


def simple_paths(edges, h, t, max_len, exclude=()):
    """Relation sequences of node-simple paths h -> t with 1..max_len edges."""
    if h == t:
        return set()
    out = out_lists(set(edges) - set(exclude))
    found = set()

    def dfs(v, visited, rels):
        if v == t:
            found.add(tuple(rels))
            return
        if len(rels) == max_len:
            return
        for r, u in out[v]:
            if u not in visited:
                dfs(u, visited | {u}, rels + [r])

    dfs(h, {h}, [])
    return found


def walk_pairs(edges, body, num_entities):
    """All (x, y) joined by at least one walk labelled body."""
    out = out_lists(edges)
    pairs = set()
    for x in range(num_entities):
        frontier = {x}
        for r in body:
            frontier = {u for v in frontier for rr, u in out[v] if rr == r}
        pairs.update((x, y) for y in frontier)
    return pairs


def body_count(edges, body, num_entities):
    return len(walk_pairs(edges, body, num_entities))


def support(edges, body, head, num_entities):
    return sum(1 for x, y in walk_pairs(edges, body, num_entities) if (x, head, y) in edges)


def walk_counts(edges, h, body, num_entities, exclude=()):
    """Number of distinct walks labelled body from h to each entity, by DFS."""
    out = out_lists(set(edges) - set(exclude))
    counts = np.zeros(num_entities, dtype=np.int64)

    def dfs(v, i):
        if i == len(body):
            counts[v] += 1
            return
        for r, u in out[v]:
            if r == body[i]:
                dfs(u, i + 1)

    dfs(h, 0)
    return counts


def reaches(edges, h, body, num_entities, exclude=()):
    return set(np.nonzero(walk_counts(edges, h, body, num_entities, exclude))[0].tolist())


def random_triples(rng, max_entities=50, max_relations=4, max_edges=None):
    n = int(rng.integers(2, max_entities + 1))
    R = int(rng.integers(1, max_relations + 1))
    m = int(rng.integers(0, (max_edges or 3 * n) + 1))
    triples = np.stack([rng.integers(n, size=m), rng.integers(R, size=m), rng.integers(n, size=m)], axis=1)
    return n, R, triples.reshape(-1, 3).astype(np.int64)


def dense_rgcn_layer(x, edges, self_weight, rel_weight, bias):
    """Per-node loop version of the relational graph convolution."""
    n = x.shape[0]
    out = []
    for v in range(n):
        acc = x[v] @ self_weight + bias
        by_rel = defaultdict(list)
        for s, r, d in edges:
            if d == v:
                by_rel[r].append(s)
        for r, srcs in by_rel.items():
            for s in srcs:
                acc = acc + (x[s] @ rel_weight[r]) / len(srcs)
        out.append(acc)
    return torch.stack(out) if out else x.new_zeros(0, self_weight.shape[1])


def dense_gru(seq, W, U, b):
    """Plain GRU over an unpadded sequence of input vectors."""
    h = torch.zeros(W.shape[-1], dtype=seq.dtype)
    for x in seq:
        z = torch.sigmoid(x @ W[0] + h @ U[0] + b[0])
        r = torch.sigmoid(x @ W[1] + h @ U[1] + b[1])
        c = torch.tanh(x @ W[2] + (r * h) @ U[2] + b[2])
        h = (1 - z) * h + z * c
    return h
