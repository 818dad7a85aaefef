import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

import oracles
from helpers import make_graph
from slogic.mining import RuleStats
from slogic.model import (
    GRUEncoder,
    ModelConfig,
    RGCNLayer,
    SLogicScorer,
    SubgraphBatch,
    load_checkpoint,
    pad_bodies,
    save_checkpoint,
    static_features,
)
from slogic.subgraph import Subgraph, extract_subgraph


def toy_subgraph():
    # 3 nodes: center 0 -r0-> 1, 1 -r1-> 2, with inverses (R=2 originals)
    g = make_graph([(0, 0, 1), (1, 1, 2)], 3, 2)
    return extract_subgraph(g, 0, 2, 100)


def tiny_model(dim=4, layers=1, seed=0, dtype=torch.float64, R=2):
    torch.manual_seed(seed)
    return SLogicScorer(ModelConfig(2 * R, dim, layers, dropout=0.5)).to(dtype)


def zero_params(model):
    with torch.no_grad():
        for p in model.parameters():
            p.zero_()


def relative_error(a, b):
    scale = max(a.norm().item(), b.norm().item())
    return 0.0 if scale < 1e-12 else (a - b).norm().item() / scale


class TestRGCN:
    def test_matches_dense_reference(self):
        torch.manual_seed(0)
        sg = toy_subgraph()
        batch = SubgraphBatch.from_subgraphs([sg], dtype=torch.float64)
        layer = RGCNLayer(4, 3, 4).double()
        with torch.no_grad():
            layer.bias.normal_()
        got = layer(batch.x, batch.src, batch.rel, batch.dst, batch.norm)
        want = oracles.dense_rgcn_layer(batch.x, sg.edges.tolist(), layer.self_weight, layer.rel_weight, layer.bias)
        torch.testing.assert_close(got, want)

    @given(st.integers(0, 2**32 - 1))
    def test_matches_dense_reference_on_random_subgraphs(self, seed):
        n, R, triples = oracles.random_triples(np.random.default_rng(seed), 10, 3)
        g = make_graph(triples, n, R)
        sgs = [extract_subgraph(g, h, 2, 4, seed) for h in range(min(n, 3))]
        batch = SubgraphBatch.from_subgraphs(sgs, dtype=torch.float64)
        torch.manual_seed(seed % 1000)
        layer = RGCNLayer(4, 2, 2 * R).double()
        got = layer(batch.x, batch.src, batch.rel, batch.dst, batch.norm)
        offsets = np.cumsum([0] + [s.num_nodes for s in sgs])
        for sg, off in zip(sgs, offsets[:-1]):
            x = batch.x[off : off + sg.num_nodes]
            want = oracles.dense_rgcn_layer(x, sg.edges.tolist(), layer.self_weight, layer.rel_weight, layer.bias)
            torch.testing.assert_close(got[off : off + sg.num_nodes], want)

    def test_zero_weights_give_zero(self):
        sg = toy_subgraph()
        model = tiny_model()
        zero_params(model)
        head, pooled = model.encode_subgraphs(SubgraphBatch.from_subgraphs([sg], torch.float64))
        assert torch.count_nonzero(head) == 0 and torch.count_nonzero(pooled) == 0

    def test_single_node_head_equals_pooled(self):
        sg = Subgraph(0, np.array([0]), np.zeros((0, 3), dtype=np.int64), np.array([[1, 0, 0, 0.5]], dtype=np.float32))
        model = tiny_model().eval()
        head, pooled = model.encode_subgraphs(SubgraphBatch.from_subgraphs([sg], torch.float64))
        torch.testing.assert_close(head, pooled)


class TestGRU:
    def test_zero_weights_fixed_point(self):
        gru = GRUEncoder(3)
        zero_params(gru)
        out = gru(torch.zeros(1, 1, 3), torch.ones(1, 1, dtype=torch.bool))
        assert torch.count_nonzero(out) == 0

    def test_scalar_hand_computation(self):
        gru = GRUEncoder(1).double()
        with torch.no_grad():
            gru.weight_ih.copy_(torch.tensor([0.5, -0.3, 0.8], dtype=torch.float64).reshape(3, 1, 1))
            gru.weight_hh.copy_(torch.tensor([0.2, 0.4, -0.6], dtype=torch.float64).reshape(3, 1, 1))
            gru.bias.copy_(torch.tensor([0.1, 0.0, -0.2], dtype=torch.float64).reshape(3, 1))
        xs = [1.0, -2.0]
        sig = lambda v: 1 / (1 + math.exp(-v))
        h = 0.0
        for x in xs:
            z = sig(0.5 * x + 0.2 * h + 0.1)
            r = sig(-0.3 * x + 0.4 * h)
            c = math.tanh(0.8 * x - 0.6 * r * h - 0.2)
            h = (1 - z) * h + z * c
        out = gru(torch.tensor(xs, dtype=torch.float64).reshape(1, 2, 1), torch.ones(1, 2, dtype=torch.bool))
        assert out.item() == pytest.approx(h, abs=1e-12)

    def test_matches_dense_reference(self):
        torch.manual_seed(3)
        gru = GRUEncoder(5).double()
        seq = torch.randn(4, 5, dtype=torch.float64)
        out = gru(seq[None], torch.ones(1, 4, dtype=torch.bool))
        torch.testing.assert_close(out[0], oracles.dense_gru(seq, gru.weight_ih, gru.weight_hh, gru.bias))

    def test_padding_invariance(self):
        model = tiny_model(dim=6).eval()
        bodies = [(0, 1), (3,), (2, 1, 0)]
        a = model.encode_bodies(pad_bodies(bodies, model.pad, max_len=3))
        b = model.encode_bodies(pad_bodies(bodies, model.pad, max_len=5))
        torch.testing.assert_close(a, b, rtol=0, atol=0)

    def test_pad_bodies_validation(self):
        assert pad_bodies([(1, 2), (3,)], 9).tolist() == [[1, 2], [9, 3]]
        with pytest.raises(ValueError):
            pad_bodies([(1, 2, 3)], 9, max_len=2)
        with pytest.raises(ValueError):
            pad_bodies([()], 9)


def _score_inputs(model, sg, bodies, static):
    dtype = next(model.parameters()).dtype
    return (
        SubgraphBatch.from_subgraphs([sg], dtype=dtype),
        torch.tensor([1]),
        torch.zeros(len(bodies), dtype=torch.long),
        pad_bodies(bodies, model.pad),
        torch.tensor(static, dtype=dtype),
    )


class TestScorer:
    def test_zero_params_zero_score(self):
        model = tiny_model()
        zero_params(model)
        phi = model.score_rules(toy_subgraph(), 1, [(0, 1), (2,)], [[1, 0.5, 0.5, 0.2]] * 2)
        np.testing.assert_array_equal(phi, [0, 0])

    def test_eval_mode_is_deterministic(self):
        model = tiny_model().train()
        sg = toy_subgraph()
        a = model.score_rules(sg, 1, [(0, 1)], [[1, 0.5, 0.5, 0.2]])
        b = model.score_rules(sg, 1, [(0, 1)], [[1, 0.5, 0.5, 0.2]])
        np.testing.assert_array_equal(a, b)
        assert model.training  # restored

    def test_no_entity_ids_in_forward(self):
        model = tiny_model().eval()
        sg = toy_subgraph()
        relabelled = Subgraph(10**6, sg.nodes + 10**6, sg.edges, sg.features)
        np.testing.assert_array_equal(
            model.score_rules(sg, 1, [(0, 1)], [[1, 0.5, 0.5, 0.2]]),
            model.score_rules(relabelled, 1, [(0, 1)], [[1, 0.5, 0.5, 0.2]]),
        )

    def test_static_features(self):
        s = RuleStats(3, 4, 0.75, 4 / 6, 0.3)
        assert static_features(s) == [math.log1p(3), 0.75, 4 / 6, 0.3]

    def test_gradient_matches_finite_differences(self):
        model = tiny_model(dim=4, layers=1).eval()
        sg = toy_subgraph()
        inputs = _score_inputs(model, sg, [(0, 1), (2, 3)], [[0.7, 0.5, 0.4, 0.3], [1.1, 0.2, 0.25, 0.1]])
        weights = torch.tensor([1.0, -0.7], dtype=torch.float64)

        def objective():
            return (model(*inputs) * weights).sum()

        model.zero_grad()
        objective().backward()
        step = 1e-4
        for name, p in model.named_parameters():
            analytic = p.grad.clone()
            numeric = torch.zeros_like(p)
            flat = p.data.view(-1)
            with torch.no_grad():
                for i in range(flat.numel()):
                    orig = flat[i].item()
                    flat[i] = orig + step
                    up = objective().item()
                    flat[i] = orig - step
                    down = objective().item()
                    flat[i] = orig
                    numeric.view(-1)[i] = (up - down) / (2 * step)
            assert relative_error(analytic, numeric) < 1e-3, name

    def test_padding_row_gradient_is_zero(self):
        model = tiny_model(dim=4).train()
        inputs = _score_inputs(model, toy_subgraph(), [(0, 1, 2), (3,)], [[0.7, 0.5, 0.4, 0.3]] * 2)
        model(*inputs).sum().backward()
        grad = model.relation_embeddings.weight.grad
        assert torch.count_nonzero(grad[model.pad]) == 0
        assert torch.count_nonzero(grad[3]) > 0

    def test_checkpoint_round_trip(self, tmp_path):
        model = tiny_model(dtype=torch.float32).eval()
        save_checkpoint(tmp_path / "a.ckpt", model, {"note": 1})
        loaded, extra = load_checkpoint(tmp_path / "a.ckpt")
        assert extra == {"note": 1}
        sg = toy_subgraph()
        args = (sg, 1, [(0, 1)], [[1, 0.5, 0.5, 0.2]])
        np.testing.assert_array_equal(model.score_rules(*args), loaded.score_rules(*args))
        save_checkpoint(tmp_path / "b.ckpt", loaded, {"note": 1})
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
