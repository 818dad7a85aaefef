"""Query-conditioned rule scorer phi(h, r, body).

Three parts feed a two-layer MLP: an R-GCN over the head entity's
subgraph (head node embedding and mean-pooled graph embedding), the
embedding of the query relation, and a GRU summary of the rule body.
Four static rule statistics are appended to the MLP input.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from slogic.container import read_container, write_container
from slogic.mining import RuleStats
from slogic.subgraph import FEATURE_DIM, Subgraph

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    num_relations: int  # augmented count; the padding id equals this value
    dim: int = 128
    gnn_layers: int = 2
    dropout: float = 0.5
    hidden: int | None = None  # MLP hidden width, defaults to dim


def static_features(stats: RuleStats) -> list[float]:
    return [math.log1p(stats.support), stats.confidence, stats.laplace, stats.wilson]


class RGCNLayer(nn.Module):
    """h'_v = W0 h_v + sum_r sum_{u in N_r(v)} W_r h_u / |N_r(v)| + b."""

    def __init__(self, in_dim: int, out_dim: int, num_relations: int):
        super().__init__()
        self.self_weight = nn.Parameter(torch.empty(in_dim, out_dim))
        self.rel_weight = nn.Parameter(torch.empty(num_relations, in_dim, out_dim))
        self.bias = nn.Parameter(torch.zeros(out_dim))
        nn.init.xavier_uniform_(self.self_weight)
        for w in self.rel_weight:
            nn.init.xavier_uniform_(w)

    def forward(self, x, src, rel, dst, norm):
        out = x @ self.self_weight + self.bias
        if len(src):
            agg = torch.zeros_like(out)
            for r in torch.unique(rel).tolist():
                sel = rel == r
                msgs = (x[src[sel]] @ self.rel_weight[r]) * norm[sel, None]
                agg = agg.index_add(0, dst[sel], msgs)
            out = out + agg
        return out


class GRUEncoder(nn.Module):
    """Single-layer GRU whose state is frozen across padded positions."""

    def __init__(self, dim: int):
        super().__init__()
        # gate order: update, reset, candidate
        self.weight_ih = nn.Parameter(torch.empty(3, dim, dim))
        self.weight_hh = nn.Parameter(torch.empty(3, dim, dim))
        self.bias = nn.Parameter(torch.zeros(3, dim))
        bound = 1.0 / math.sqrt(dim)
        nn.init.uniform_(self.weight_ih, -bound, bound)
        nn.init.uniform_(self.weight_hh, -bound, bound)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """x: (B, T, d) embeddings, mask: (B, T) true on real tokens."""
        h = x.new_zeros(x.shape[0], x.shape[2])
        W, U, b = self.weight_ih, self.weight_hh, self.bias
        for step in range(x.shape[1]):
            xt = x[:, step]
            z = torch.sigmoid(xt @ W[0] + h @ U[0] + b[0])
            r = torch.sigmoid(xt @ W[1] + h @ U[1] + b[1])
            cand = torch.tanh(xt @ W[2] + (r * h) @ U[2] + b[2])
            h_new = (1 - z) * h + z * cand
            h = torch.where(mask[:, step, None], h_new, h)
        return h


@dataclass
class SubgraphBatch:
    x: torch.Tensor
    src: torch.Tensor
    rel: torch.Tensor
    dst: torch.Tensor
    norm: torch.Tensor
    graph_index: torch.Tensor
    head_index: torch.Tensor
    num_graphs: int

    @classmethod
    def from_subgraphs(cls, subgraphs: Sequence[Subgraph], dtype=torch.float32) -> "SubgraphBatch":
        offsets = np.cumsum([0] + [s.num_nodes for s in subgraphs])
        feats = np.concatenate([s.features for s in subgraphs]) if subgraphs else np.zeros((0, FEATURE_DIM))
        edges = [s.edges + np.array([off, 0, off]) for s, off in zip(subgraphs, offsets[:-1]) if len(s.edges)]
        edges = np.concatenate(edges) if edges else np.zeros((0, 3), dtype=np.int64)
        src, rel, dst = (torch.as_tensor(edges[:, i], dtype=torch.long) for i in range(3))
        # 1 / |N_r(v)| per edge, counted over distinct (dst, rel)
        if len(edges):
            _, inv, counts = np.unique(edges[:, [2, 1]], axis=0, return_inverse=True, return_counts=True)
            norm = 1.0 / counts[inv.reshape(-1)]
        else:
            norm = np.zeros(0)
        graph_index = np.repeat(np.arange(len(subgraphs)), np.diff(offsets))
        return cls(
            torch.as_tensor(feats, dtype=dtype),
            src,
            rel,
            dst,
            torch.as_tensor(norm, dtype=dtype),
            torch.as_tensor(graph_index, dtype=torch.long),
            torch.as_tensor(offsets[:-1], dtype=torch.long),
            len(subgraphs),
        )


def pad_bodies(bodies: Sequence[Sequence[int]], pad: int, max_len: int | None = None) -> torch.Tensor:
    """Left-pad relation id sequences to a common length."""
    width = max(len(b) for b in bodies) if max_len is None else max_len
    out = torch.full((len(bodies), width), pad, dtype=torch.long)
    for i, body in enumerate(bodies):
        if len(body) == 0 or len(body) > width:
            raise ValueError(f"body length {len(body)} outside [1, {width}]")
        out[i, width - len(body) :] = torch.as_tensor(body, dtype=torch.long)
    return out


class SLogicScorer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.dim
        self.pad = cfg.num_relations
        self.relation_embeddings = nn.Embedding(cfg.num_relations + 1, d, padding_idx=self.pad)
        self.rgcn = nn.ModuleList(
            RGCNLayer(FEATURE_DIM if i == 0 else d, d, cfg.num_relations) for i in range(cfg.gnn_layers)
        )
        self.gru = GRUEncoder(d)
        hidden = cfg.hidden or d
        self.mlp = nn.Sequential(nn.Linear(4 * d + 4, hidden), nn.ReLU(), nn.Dropout(cfg.dropout), nn.Linear(hidden, 1))
        self.dropout = nn.Dropout(cfg.dropout)

    def encode_subgraphs(self, batch: SubgraphBatch) -> tuple[torch.Tensor, torch.Tensor]:
        """(head node embeddings, mean-pooled embeddings), one row per subgraph."""
        h = batch.x
        for layer in self.rgcn:
            h = self.dropout(torch.relu(layer(h, batch.src, batch.rel, batch.dst, batch.norm)))
        head = h[batch.head_index]
        pooled = h.new_zeros(batch.num_graphs, h.shape[1]).index_add(0, batch.graph_index, h)
        counts = torch.bincount(batch.graph_index, minlength=batch.num_graphs).clamp(min=1)
        return head, pooled / counts[:, None].to(h.dtype)

    def encode_bodies(self, bodies: torch.Tensor) -> torch.Tensor:
        mask = bodies != self.pad
        return self.gru(self.relation_embeddings(bodies), mask)

    def score(
        self,
        head: torch.Tensor,
        pooled: torch.Tensor,
        query_relations: torch.Tensor,
        query_index: torch.Tensor,
        bodies: torch.Tensor,
        static: torch.Tensor,
    ) -> torch.Tensor:
        """phi for each rule row; ``query_index`` maps rows to encoded subgraphs."""
        feats = torch.cat(
            [
                head[query_index],
                pooled[query_index],
                self.relation_embeddings(query_relations[query_index]),
                self.encode_bodies(bodies),
                static,
            ],
            dim=1,
        )
        return self.mlp(feats).squeeze(1)

    def forward(self, subgraphs, query_relations, query_index, bodies, static):
        head, pooled = self.encode_subgraphs(subgraphs)
        return self.score(head, pooled, query_relations, query_index, bodies, static)

    def score_rules(self, subgraph: Subgraph, query_relation: int, bodies, static) -> np.ndarray:
        """Evaluation-mode scores of several rules for one query."""
        if len(bodies) == 0:
            return np.zeros(0)
        was_training = self.training
        self.eval()
        dtype = next(self.parameters()).dtype
        with torch.no_grad():
            batch = SubgraphBatch.from_subgraphs([subgraph], dtype=dtype)
            phi = self(
                batch,
                torch.tensor([query_relation]),
                torch.zeros(len(bodies), dtype=torch.long),
                pad_bodies(bodies, self.pad),
                torch.as_tensor(np.asarray(static, dtype=np.float64), dtype=dtype).reshape(-1, 4),
            )
        self.train(was_training)
        return phi.double().numpy()


def save_checkpoint(path, model: SLogicScorer, extra: dict | None = None) -> None:
    arrays = {name: t.detach().cpu().numpy() for name, t in model.state_dict().items()}
    meta = {"model": asdict(model.cfg), "extra": extra or {}}
    write_container(path, "checkpoint", CHECKPOINT_FORMAT_VERSION, meta, arrays)


def load_checkpoint(path) -> tuple[SLogicScorer, dict]:
    meta, arrays = read_container(path, "checkpoint", CHECKPOINT_FORMAT_VERSION)
    model = SLogicScorer(ModelConfig(**meta["model"]))
    model.load_state_dict({k: torch.from_numpy(v) for k, v in arrays.items()})
    model.eval()
    return model, meta["extra"]
