from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from slogic.instances import TrainingPair
from slogic.mining import RuleBase
from slogic.model import SLogicScorer, SubgraphBatch, pad_bodies, static_features
from slogic.subgraph import SubgraphStore, remove_target_edge

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    epochs: int = 5
    batch_size: int = 32
    seed: int = 0
    epsilon: float = 1.0


def margin_loss(pos, neg, epsilon: float = 1.0):
    """max(0, epsilon - (pos - neg)); works on floats and tensors."""
    if epsilon < 0:
        raise ValueError("margin must be non-negative")
    if isinstance(pos, torch.Tensor) or isinstance(neg, torch.Tensor):
        return torch.relu(epsilon - (pos - neg))
    return max(0.0, epsilon - (pos - neg))


@dataclass
class TrainLog:
    epoch_loss: list[float] = field(default_factory=list)
    steps: int = 0


class PairBatcher:
    """Turns training records into model inputs.

    Each distinct triple in a batch contributes one subgraph (its target
    edge pair removed); every distinct rule of a triple is scored once and
    the (positive, negative) combinations index into those scores.
    """

    def __init__(self, store: SubgraphStore, rule_base: RuleBase, num_original_relations: int, dtype=torch.float32):
        self.store = store
        self.rule_base = rule_base
        self.R = num_original_relations
        self.dtype = dtype
        self._static = {}

    def static(self, rid: int) -> list[float]:
        feats = self._static.get(rid)
        if feats is None:
            feats = self._static[rid] = static_features(self.rule_base.stats[rid])
        return feats

    def __call__(self, records: Sequence[TrainingPair], pad: int):
        triple_slot: dict[tuple, int] = {}
        subgraphs, query_rel = [], []
        rule_slot: dict[tuple, int] = {}
        q_index, bodies, static = [], [], []
        pos_idx, neg_idx = [], []

        def slot(q, rid):
            key = (q, rid)
            i = rule_slot.get(key)
            if i is None:
                i = rule_slot[key] = len(bodies)
                q_index.append(q)
                bodies.append(self.rule_base.rules[rid].body)
                static.append(self.static(rid))
            return i

        for rec in records:
            q = triple_slot.get(rec.triple)
            if q is None:
                h, r, t = rec.triple
                q = triple_slot[rec.triple] = len(subgraphs)
                r_inv = r + self.R if r < self.R else r - self.R
                subgraphs.append(remove_target_edge(self.store[h], h, r, t, r_inv))
                query_rel.append(r)
            p = slot(q, rec.positive)
            for neg in rec.negatives:
                pos_idx.append(p)
                neg_idx.append(slot(q, neg))
        return (
            SubgraphBatch.from_subgraphs(subgraphs, dtype=self.dtype),
            torch.tensor(query_rel, dtype=torch.long),
            torch.tensor(q_index, dtype=torch.long),
            pad_bodies(bodies, pad),
            torch.tensor(static, dtype=self.dtype),
            torch.tensor(pos_idx, dtype=torch.long),
            torch.tensor(neg_idx, dtype=torch.long),
        )


def train(
    model: SLogicScorer,
    records: Sequence[TrainingPair],
    store: SubgraphStore,
    rule_base: RuleBase,
    cfg: TrainConfig = TrainConfig(),
) -> TrainLog:
    """Adam on the mean margin ranking loss over all (positive, negative) pairs.

    Batch order and dropout masks derive from ``cfg.seed``; single-threaded
    runs with the same seed give identical parameters.
    """
    if not records:
        raise ValueError("no training instances")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    dtype = next(model.parameters()).dtype
    batcher = PairBatcher(store, rule_base, model.cfg.num_relations // 2, dtype)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=(0.9, 0.999), eps=1e-8)
    history = TrainLog()
    model.train()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(records))
        total, count = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [records[i] for i in order[start : start + cfg.batch_size]]
            sg, qrel, qidx, bodies, static, pos, neg = batcher(batch, model.pad)
            if len(pos) == 0:
                continue
            phi = model(sg, qrel, qidx, bodies, static)
            losses = margin_loss(phi[pos], phi[neg], cfg.epsilon)
            loss = losses.mean()
            if not torch.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch} step {history.steps}: "
                    f"phi range [{phi.min().item()}, {phi.max().item()}], batch triples "
                    f"{[r.triple for r in batch[:5]]}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            history.steps += 1
            total += float(losses.detach().sum())
            count += len(losses)
        history.epoch_loss.append(total / max(count, 1))
        log.info("epoch %d: mean pair loss %.4f", epoch + 1, history.epoch_loss[-1])
    model.eval()
    return history
