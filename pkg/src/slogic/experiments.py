"""End-to-end runs on in-memory KGs, shared by scripts/ and the acceptance tests."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import torch

from slogic.evaluate import EvaluationResult, evaluate
from slogic.graph import build_graph, load_triples
from slogic.inference import FallbackTable, InferenceConfig, QueryEngine
from slogic.instances import GenerationStats, generate
from slogic.mining import RuleBase, build_rule_base, mine_rules
from slogic.model import ModelConfig, SLogicScorer, static_features
from slogic.subgraph import SubgraphStore, extract_all
from slogic.synthetic import SyntheticKG
from slogic.training import TrainConfig, train


@dataclass(frozen=True)
class ExperimentConfig:
    L: int = 3
    k: int = 1
    alpha: int = 100
    k_pos: int = 5
    k_neg: int = 20
    K: int = 100
    dim: int = 32
    gnn_layers: int = 1
    dropout: float = 0.5
    epochs: int = 5
    batch_size: int = 8
    lr: float = 0.001
    epsilon: float = 1.0
    N: int = 50
    T: float = 0.5
    tau: float = 2.0
    seed: int = 0


@dataclass
class ExperimentResult:
    slogic: EvaluationResult
    static: EvaluationResult
    model: SLogicScorer
    rule_base: RuleBase
    store: SubgraphStore
    generation: GenerationStats
    epoch_loss: list[float]
    timings: dict[str, float] = field(default_factory=dict)


def run_experiment(kg: SyntheticKG, cfg: ExperimentConfig = ExperimentConfig()) -> ExperimentResult:
    timings = {}
    clock = time.perf_counter()

    def lap(name):
        nonlocal clock
        now = time.perf_counter()
        timings[name] = now - clock
        clock = now

    splits = kg.splits
    g = build_graph(splits["train"], kg.vocab)
    rule_base = build_rule_base(mine_rules(g, cfg.L, seed=cfg.seed), g)
    lap("mine")
    store = extract_all(g, cfg.k, cfg.alpha, cfg.seed)
    lap("subgraphs")
    gen = GenerationStats()
    records = list(generate(g, rule_base, cfg.k_pos, cfg.k_neg, cfg.K, cfg.seed, stats=gen))
    lap("instances")
    torch.manual_seed(cfg.seed)
    model = SLogicScorer(ModelConfig(g.num_relations, cfg.dim, cfg.gnn_layers, cfg.dropout))
    history = train(model, records, store, rule_base, TrainConfig(cfg.lr, cfg.epochs, cfg.batch_size, cfg.seed, cfg.epsilon))
    lap("train")
    fallback = FallbackTable(splits["train"], g.num_entities, g.num_original_relations)
    icfg = InferenceConfig(cfg.N, cfg.T, cfg.tau)
    all_splits = list(splits.values())
    learned = evaluate(QueryEngine(g, rule_base, fallback, icfg, model, store), splits["test"], all_splits, g)
    static = evaluate(QueryEngine(g, rule_base, fallback, icfg), splits["test"], all_splits, g)
    lap("eval")
    return ExperimentResult(learned, static, model, rule_base, store, gen, history.epoch_loss, timings)


def rule_preference(kg: SyntheticKG, result: ExperimentResult) -> dict[int, bool]:
    """Per two-cluster test head: does the model score rule A above rule B?"""
    v, rb = kg.vocab, result.rule_base
    q = v.relation_id(kg.info["query_relation"])
    ids = [rb.find(q, tuple(v.relation_id(x) for x in kg.info[key])) for key in ("rule_a", "rule_b")]
    if None in ids:
        raise LookupError("planted rules missing from the rule base")
    bodies = [rb.rules[i].body for i in ids]
    static = [static_features(rb.stats[i]) for i in ids]
    out = {}
    for h in np.unique(kg.splits["test"][:, 0]).tolist():
        phi = result.model.score_rules(result.store[h], q, bodies, static)
        out[h] = bool(phi[0] > phi[1])
    return out


def flip_fraction(kg: SyntheticKG, result: ExperimentResult) -> float:
    """Share of test heads whose preferred rule is their own cluster's rule."""
    prefs = rule_preference(kg, result)
    cluster = kg.info["cluster_of"]
    hits = [prefer_a == (cluster[h] == "A") for h, prefer_a in prefs.items()]
    return float(np.mean(hits)) if hits else 0.0


@dataclass
class ScaleReport:
    num_triples: int
    num_rules: int
    mining_s: float
    instances_s: float
    generation: GenerationStats
    max_records_per_triple: int
    expansion_ratio: float


def scale_check(train_path, L: int = 3, k_pos: int = 5, k_neg: int = 20, N: int = 50, seed: int = 0, threads: int = 1) -> ScaleReport:
    """Mine, build the rule base and generate instances over a full training file.

    The expansion ratio is (positive, negative) pairs per augmented
    training triple, nominally ``k_pos * k_neg``.
    """
    triples, vocab = load_triples(train_path)
    g = build_graph(triples, vocab)
    t0 = time.perf_counter()
    rule_base = build_rule_base(mine_rules(g, L, seed=seed, threads=threads), g)
    t1 = time.perf_counter()
    gen = GenerationStats()
    for _ in generate(g, rule_base, k_pos, k_neg, 2 * N, seed, stats=gen, threads=threads):
        pass
    t2 = time.perf_counter()
    ratio = gen.pairs / max(gen.triples, 1)
    return ScaleReport(len(g.original), len(rule_base), t1 - t0, t2 - t1, gen, gen.max_records_per_triple, ratio)
