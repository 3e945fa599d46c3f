"""Encoder behavior: recurrence, attention, anchors, padding, dropout."""

import math

import numpy as np
import pytest

from revdict import autodiff as ad
from revdict.autodiff import Graph
from revdict.encoder import EncoderConfig, attend, encode
from revdict.lexicon import batch_from_sequences
from revdict.model import init_params


def make_setup(seed=0, n_words=9, dim=3, hidden=2, dropout=0.0, attention="literal"):
    rng = np.random.default_rng(seed)
    emb = rng.normal(size=(n_words, dim))
    config = EncoderConfig(embed_dim=dim, hidden_dim=hidden, dropout=dropout,
                           attention=attention)

    class _Stub:
        pos_names = ()
        morpheme_names = ()
        sememe_names = ()
        category_sizes = ()

    params = init_params(config, _Stub(), emb, seed=seed)
    return config, params, emb


def run_encode(config, params, emb, sequences, training=False, rng=None):
    graph = Graph()
    nodes = {name: graph.parameter(name, arr) for name, arr in sorted(params.tensors.items())}
    batch = batch_from_sequences(sequences)
    return encode(graph, batch, emb, nodes, config, training=training, rng=rng)


class TestEncode:
    def test_single_token_closed_form(self):
        config, params, emb = make_setup(seed=1)
        state = run_encode(config, params, emb, [[4]])
        h1 = state.h.value[0, 0]
        assert np.array_equal(state.h_t.value[0], h1)
        norm_sq = float(h1 @ h1)
        assert state.alpha.value[0, 0] == pytest.approx(norm_sq, rel=1e-12)
        assert np.allclose(state.v.value[0], norm_sq * h1, rtol=1e-12)

    def test_zero_weights_give_zero_states_and_v(self):
        config, params, emb = make_setup(seed=2)
        for key in params.tensors:
            params.tensors[key] = np.zeros_like(params.tensors[key])
        state = run_encode(config, params, emb, [[1, 2, 3]])
        assert np.array_equal(state.h.value, np.zeros_like(state.h.value))
        assert np.array_equal(state.v.value, np.zeros_like(state.v.value))

    def test_two_token_query_matches_scalar_hand_trace(self):
        # d = l = 1: every quantity is a scalar, traced with plain math calls
        dim = hidden = 1
        config = EncoderConfig(embed_dim=dim, hidden_dim=hidden, dropout=0.0)
        emb = np.array([[0.5], [-0.3]])
        weights = {}
        vals = {"w_input": (0.2, 0.3), "w_forget": (-0.1, 0.2),
                "w_output": (0.4, -0.2), "w_candidate": (0.3, 0.1)}
        biases = {"b_input": 0.05, "b_forget": -0.05, "b_output": 0.1, "b_candidate": 0.0}
        for direction in ("lstm_fwd", "lstm_bwd"):
            for gate, (wx, wh) in vals.items():
                weights[f"{direction}.{gate.replace('w_', 'w_')}"] = np.array([[wx, wh]])
            for gate, b in biases.items():
                weights[f"{direction}.{gate}"] = np.array([b])
        from revdict.model import ModelParams
        params = ModelParams(tensors=weights, embeddings=emb)

        def sig(x):
            return 1.0 / (1.0 + math.exp(-x))

        def step(x, h, c):
            i = sig(0.2 * x + 0.3 * h + 0.05)
            f = sig(-0.1 * x + 0.2 * h - 0.05)
            o = sig(0.4 * x - 0.2 * h + 0.1)
            g = math.tanh(0.3 * x + 0.1 * h)
            c_new = f * c + i * g
            return o * math.tanh(c_new), c_new

        x1, x2 = 0.5, -0.3
        hf1, cf1 = step(x1, 0.0, 0.0)
        hf2, _ = step(x2, hf1, cf1)
        hb2, cb2 = step(x2, 0.0, 0.0)
        hb1, _ = step(x1, hb2, cb2)
        h_rows = [(hf1, hb1), (hf2, hb2)]
        h_t = (hf2, hb1)
        alpha = [h_t[0] * hf + h_t[1] * hb for hf, hb in h_rows]
        v = (sum(a * hf for a, (hf, _) in zip(alpha, h_rows)),
             sum(a * hb for a, (_, hb) in zip(alpha, h_rows)))

        state = run_encode(config, params, emb, [[0, 1]])
        assert np.allclose(state.h.value[0], [[hf1, hb1], [hf2, hb2]], rtol=1e-12)
        assert np.allclose(state.h_t.value[0], list(h_t), rtol=1e-12)
        assert np.allclose(state.alpha.value[0], alpha, rtol=1e-12)
        assert np.allclose(state.v.value[0], list(v), rtol=1e-12)

    def test_concatenation_order_forward_then_backward(self):
        config, params, emb = make_setup(seed=3)
        state = run_encode(config, params, emb, [[1, 2], [3, 4]])
        hidden = config.hidden_dim
        assert np.array_equal(state.h.value[..., :hidden], state.h_fwd.value)
        assert np.array_equal(state.h.value[..., hidden:], state.h_bwd.value)

    def test_padding_invariance_bitwise(self):
        from revdict.lexicon import PAD_INDEX, QueryBatch

        config, params, emb = make_setup(seed=4)
        base = batch_from_sequences([[1, 2, 3], [4, 5]])
        extra = 3
        tokens = np.full((2, base.tokens.shape[1] + extra), PAD_INDEX, dtype=np.int64)
        tokens[:, : base.tokens.shape[1]] = base.tokens
        mask = np.zeros_like(tokens, dtype=np.float64)
        mask[:, : base.mask.shape[1]] = base.mask
        padded_batch = QueryBatch(tokens=tokens, lengths=base.lengths, mask=mask)

        graph = Graph()
        nodes = {n: graph.parameter(n, a) for n, a in sorted(params.tensors.items())}
        short = encode(graph, base, emb, nodes, config)
        graph2 = Graph()
        nodes2 = {n: graph2.parameter(n, a) for n, a in sorted(params.tensors.items())}
        padded = encode(graph2, padded_batch, emb, nodes2, config)

        width = base.tokens.shape[1]
        assert np.array_equal(padded.h.value[:, :width], short.h.value)
        assert np.array_equal(padded.h_t.value, short.h_t.value)
        assert np.array_equal(padded.alpha.value[:, :width], short.alpha.value)
        assert np.array_equal(padded.alpha.value[:, width:], np.zeros((2, extra)))
        assert np.array_equal(padded.v.value, short.v.value)

    def test_dropout_only_in_training_mode(self):
        config, params, emb = make_setup(seed=5, dropout=0.5)
        a = run_encode(config, params, emb, [[1, 2]])
        b = run_encode(config, params, emb, [[1, 2]])
        assert np.array_equal(a.v.value, b.v.value)
        t1 = run_encode(config, params, emb, [[1, 2]], training=True,
                        rng=np.random.default_rng(0))
        t2 = run_encode(config, params, emb, [[1, 2]], training=True,
                        rng=np.random.default_rng(0))
        assert np.array_equal(t1.v.value, t2.v.value)  # same seed, same draws
        assert not np.array_equal(t1.v.value, a.v.value)

    def test_training_without_rng_rejected(self):
        config, params, emb = make_setup(seed=6, dropout=0.5)
        with pytest.raises(ValueError, match="rng"):
            run_encode(config, params, emb, [[1]], training=True)


class TestAttend:
    def _nodes(self, h, h_t):
        g = Graph()
        return g.constant(np.asarray(h, dtype=float)), g.constant(np.asarray(h_t, dtype=float))

    def test_orthogonal_anchor_gives_zero_v(self):
        h, h_t = self._nodes([[1.0, 0.0], [0.0, 0.0]], [0.0, 1.0])
        alpha, v = attend(h, h_t, np.array([1.0, 1.0]), "literal")
        assert np.array_equal(alpha.value, [0.0, 0.0])
        assert np.array_equal(v.value, [0.0, 0.0])

    def test_basis_rows_sum(self):
        h, h_t = self._nodes(np.eye(3), np.ones(3))
        alpha, v = attend(h, h_t, np.ones(3), "literal")
        assert np.array_equal(alpha.value, [1.0, 1.0, 1.0])
        assert np.array_equal(v.value, [1.0, 1.0, 1.0])

    def test_softmax_uniform_over_identical_rows(self):
        rows = np.tile([0.3, -0.2], (4, 1))
        h, h_t = self._nodes(rows, [1.0, 2.0])
        mask = np.array([1.0, 1.0, 1.0, 0.0])
        alpha, v = attend(h, h_t, mask, "softmax")
        assert np.allclose(alpha.value[:3], 1.0 / 3.0)
        assert alpha.value[3] == 0.0
        assert np.allclose(v.value, rows[0])

    def test_all_masked_rejected(self):
        h, h_t = self._nodes([[1.0, 0.0]], [1.0, 0.0])
        with pytest.raises(ValueError):
            attend(h, h_t, np.array([0.0]), "literal")

    def test_unknown_mode_rejected(self):
        h, h_t = self._nodes([[1.0, 0.0]], [1.0, 0.0])
        with pytest.raises(ValueError, match="mode"):
            attend(h, h_t, np.array([1.0]), "sparsemax")

    def test_literal_mode_homogeneity(self):
        # scaling hidden states by s scales alpha by s^2 and v by s^3
        rng = np.random.default_rng(8)
        rows = rng.normal(size=(5, 4))
        anchor = rng.normal(size=4)
        mask = np.array([1.0, 1.0, 0.0, 1.0, 1.0])
        s = 1.7
        a1, v1 = attend(*self._nodes(rows, anchor), mask, "literal")
        a2, v2 = attend(*self._nodes(rows * s, anchor * s), mask, "literal")
        assert np.allclose(a2.value, a1.value * s**2, rtol=1e-12)
        assert np.allclose(v2.value, v1.value * s**3, rtol=1e-12)


class TestConfig:
    def test_defaults_match_reference_setup(self):
        config = EncoderConfig()
        assert config.embed_dim == 300
        assert config.hidden_dim == 300
        assert config.dropout == 0.5
        assert config.attention == "literal"

    @pytest.mark.parametrize("kwargs", [
        {"embed_dim": 0}, {"hidden_dim": 0}, {"dropout": 1.0}, {"dropout": -0.1},
        {"attention": "none"},
    ])
    def test_invalid_configs_rejected(self, kwargs):
        with pytest.raises(ValueError):
            EncoderConfig(**kwargs)
