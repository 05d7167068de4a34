import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from tsdiffuse.conditioner import (
    BOS,
    EOS,
    PAD,
    UNK,
    EncoderConfig,
    TextEncoder,
    Vocab,
    build_vocab,
    encode_text,
    tokenize,
)
from tsdiffuse.errors import ConfigError
from tsdiffuse.model import init_parameters


class TestVocab:
    def test_frequency_order(self):
        assert build_vocab(["a a b"], 6).as_dict() == {"a": 4, "b": 5}

    def test_lexical_tie_break(self):
        assert build_vocab(["b a"], 6).as_dict() == {"a": 4, "b": 5}

    def test_truncates_to_size(self):
        v = build_vocab(["c c c b b a d"], 6)
        assert v.tokens == ["c", "b"]
        assert len(v) == 6

    def test_deterministic(self):
        corpus = ["A line, rising!", "a curve falling", "rising wave"]
        assert build_vocab(corpus, 20) == build_vocab(list(corpus), 20)

    def test_lowercases_and_splits_punctuation(self):
        assert build_vocab(["Up,up.DOWN"], 10).as_dict() == {"up": 4, "down": 5}

    def test_size_too_small(self):
        with pytest.raises(ConfigError):
            build_vocab(["a"], 4)

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            build_vocab([], 10)

    def test_line_serialization(self):
        v = build_vocab(["x y y z z z"], 10)
        text = v.to_lines()
        assert text.splitlines() == ["z", "y", "x"]
        assert Vocab.from_lines(text) == v

    @given(st.lists(st.text(alphabet="abc .,", max_size=20), min_size=1, max_size=8), st.integers(5, 12))
    @settings(max_examples=50, deadline=None)
    def test_ids_dense(self, corpus, size):
        v = build_vocab(corpus, size)
        assert sorted(v.as_dict().values()) == list(range(4, len(v)))
        assert len(v) <= size


class TestTokenize:
    vocab = Vocab(["increases", "then", "a"])

    def test_empty_text(self):
        seq = tokenize("", self.vocab, 6)
        assert seq.ids.tolist() == [BOS, EOS, PAD, PAD, PAD, PAD]
        assert seq.mask.tolist() == [True, True, False, False, False, False]

    def test_truncation_keeps_eos(self):
        seq = tokenize(" ".join(["a"] * 500), self.vocab, 128)
        assert seq.ids.size == 128
        assert seq.ids[0] == BOS and seq.ids[-1] == EOS
        assert seq.mask.all()

    def test_unknown_word(self):
        seq = tokenize("increases then falls", self.vocab, 8)
        assert seq.ids[1:5].tolist() == [4, 5, UNK, EOS]

    def test_max_len_too_small(self):
        with pytest.raises(ConfigError):
            tokenize("a", self.vocab, 1)

    @given(st.text(max_size=60), st.integers(2, 20))
    @settings(max_examples=80, deadline=None)
    def test_invariants(self, text, max_len):
        seq = tokenize(text, self.vocab, max_len)
        n = int(seq.mask.sum())
        assert seq.ids[0] == BOS and seq.ids[n - 1] == EOS
        assert np.all(seq.ids[~seq.mask] == PAD)
        assert not np.any(seq.ids[seq.mask] == PAD)
        assert np.all(seq.mask[:n]) and not np.any(seq.mask[n:])


def _encoder(width=8, layers=1, heads=2, vocab=12, max_len=6, seed=0):
    enc = TextEncoder(EncoderConfig(vocab_size=vocab, width=width, layers=layers, heads=heads, max_len=max_len)).double()
    gen = torch.Generator().manual_seed(seed)
    init_parameters(enc, gen)
    with torch.no_grad():
        for p in enc.parameters():
            p.add_(0.2 * torch.randn(p.shape, generator=gen, dtype=p.dtype))
    return enc


def reference_encoder(enc, ids, mask):
    """Hand-stepped numpy forward pass: embeddings, pre-norm attention, feed-forward."""
    P = {k: v.detach().numpy() for k, v in enc.state_dict().items()}
    heads = enc.config.heads

    def layer_norm(x, w, b):
        mu = x.mean(-1, keepdims=True)
        var = ((x - mu) ** 2).mean(-1, keepdims=True)
        return (x - mu) / np.sqrt(var + 1e-5) * w + b

    def gelu(x):
        return 0.5 * x * (1 + np.vectorize(math.erf)(x / math.sqrt(2)))

    x = P["tok.weight"][ids] + P["pos.weight"][: len(ids)]
    W = x.shape[1]
    hd = W // heads
    for i in range(enc.config.layers):
        pre = f"layers.{i}."
        h = layer_norm(x, P[pre + "norm1.weight"], P[pre + "norm1.bias"])
        qkv = h @ P[pre + "qkv.weight"].T + P[pre + "qkv.bias"]
        q, k, v = qkv[:, :W], qkv[:, W:2 * W], qkv[:, 2 * W:]
        att = np.zeros_like(x)
        for hh in range(heads):
            sl = slice(hh * hd, (hh + 1) * hd)
            for r in range(len(ids)):
                scores = np.array([q[r, sl] @ k[c, sl] / math.sqrt(hd) if mask[c] else -np.inf for c in range(len(ids))])
                w = np.exp(scores - scores.max())
                w /= w.sum()
                att[r, sl] = w @ v[:, sl]
        x = x + att @ P[pre + "proj.weight"].T + P[pre + "proj.bias"]
        h = layer_norm(x, P[pre + "norm2.weight"], P[pre + "norm2.bias"])
        f = gelu(h @ P[pre + "ff1.weight"].T + P[pre + "ff1.bias"])
        x = x + f @ P[pre + "ff2.weight"].T + P[pre + "ff2.bias"]
    x = layer_norm(x, P["norm.weight"], P["norm.bias"])
    return x * mask[:, None]


class TestEncoder:
    def test_matches_hand_stepped_reference(self):
        enc = _encoder()
        ids = np.array([2, 7, 9, 3, 0, 0])
        mask = np.array([1, 1, 1, 1, 0, 0], dtype=bool)
        from tsdiffuse.conditioner import TokenSeq

        memory, m = encode_text(TokenSeq(ids, mask), enc)
        np.testing.assert_allclose(memory.detach().numpy(), reference_encoder(enc, ids, mask), atol=1e-6)
        assert m.tolist() == mask.tolist()

    def test_padded_rows_zero(self):
        enc = _encoder()
        out = enc(torch.tensor([[2, 5, 3, 0, 0, 0]]), torch.tensor([[1, 1, 1, 0, 0, 0]], dtype=torch.bool))
        assert torch.all(out[0, 3:] == 0)

    def test_pad_contents_do_not_leak(self):
        enc = _encoder()
        mask = torch.tensor([[1, 1, 1, 0, 0, 0]], dtype=torch.bool)
        a = enc(torch.tensor([[2, 5, 3, 0, 0, 0]]), mask)
        b = enc(torch.tensor([[2, 5, 3, 9, 4, 11]]), mask)
        assert torch.equal(a[0, :3], b[0, :3])

    def test_permuting_pad_positions(self):
        enc = _encoder()
        mask = torch.tensor([[1, 1, 1, 0, 0, 0]], dtype=torch.bool)
        a = enc(torch.tensor([[2, 5, 3, 0, 7, 0]]), mask)
        b = enc(torch.tensor([[2, 5, 3, 7, 0, 0]]), mask)
        assert torch.equal(a[0, :3], b[0, :3])

    def test_zero_weights_give_zero_rows(self):
        enc = _encoder()
        with torch.no_grad():
            for p in enc.parameters():
                p.zero_()
        out = enc(torch.tensor([[2, 5, 6, 3]]), torch.ones(1, 4, dtype=torch.bool))
        assert torch.all(out == 0)

    def test_order_sensitive(self):
        enc = _encoder()
        mask = torch.ones(1, 4, dtype=torch.bool)
        a = enc(torch.tensor([[2, 5, 6, 3]]), mask)
        b = enc(torch.tensor([[2, 6, 5, 3]]), mask)
        assert float((a - b).detach().abs().max()) > 0

    def test_deterministic(self):
        enc = _encoder()
        ids, mask = torch.tensor([[2, 5, 6, 3]]), torch.ones(1, 4, dtype=torch.bool)
        assert torch.equal(enc(ids, mask), enc(ids, mask))

    def test_id_out_of_range(self):
        enc = _encoder(vocab=12)
        with pytest.raises(ValueError, match="out of range"):
            enc(torch.tensor([[2, 12, 3]]), torch.ones(1, 3, dtype=torch.bool))

    def test_width_must_divide_heads(self):
        with pytest.raises(ConfigError):
            TextEncoder(EncoderConfig(width=10, heads=4))

    def test_frozen_embeddings(self):
        enc = _encoder()
        table = torch.arange(12 * 8, dtype=torch.float64).reshape(12, 8) / 100
        enc.use_frozen_embeddings(table)
        assert torch.equal(enc.tok.weight, table)
        assert not enc.tok.weight.requires_grad
        with pytest.raises(ConfigError):
            enc.use_frozen_embeddings(torch.zeros(3, 8))
