import numpy as np

from slogic.graph import KnowledgeGraph, Vocabulary


def make_graph(triples, num_entities=None, R=None):
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if num_entities is None:
        num_entities = int(triples[:, [0, 2]].max()) + 1 if len(triples) else 1
    if R is None:
        R = int(triples[:, 1].max()) + 1 if len(triples) else 1
    return KnowledgeGraph(num_entities, R, triples)


def named_graph(rows):
    """Build from (head, rel, tail) name triples; returns (graph, vocab)."""
    vocab = Vocabulary()
    for h, r, t in rows:
        vocab.add_relation(r)
    ids = [(vocab.add_entity(h), vocab.relation_id(r), vocab.add_entity(t)) for h, r, t in rows]
    return KnowledgeGraph(vocab.num_entities, vocab.num_relations, np.array(ids).reshape(-1, 3)), vocab
