"""Word-level vocabulary, tokenizer, and the transformer text encoder."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError

PAD, UNK, BOS, EOS = 0, 1, 2, 3
SPECIALS = ("[PAD]", "[UNK]", "[BOS]", "[EOS]")

_WORD = re.compile(r"[^\W_]+", re.UNICODE)


def split_words(text: str) -> List[str]:
    """Lowercase and split on whitespace, punctuation, and underscores."""
    return _WORD.findall(text.lower())


class Vocab:
    """Token to id map with the four special ids reserved at 0..3."""

    def __init__(self, tokens: Sequence[str]):
        self.tokens = list(tokens)
        self._index = {tok: i + len(SPECIALS) for i, tok in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")

    def __len__(self):
        return len(SPECIALS) + len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def __getitem__(self, token) -> int:
        return self._index.get(token, UNK)

    def as_dict(self):
        return dict(self._index)

    def to_lines(self) -> str:
        """One token per line; line ``k`` (0-based) holds id ``k + 4``."""
        return "".join(tok + "\n" for tok in self.tokens)

    @classmethod
    def from_lines(cls, text: str) -> "Vocab":
        return cls([line for line in text.split("\n") if line])


def build_vocab(corpus: Iterable[str], size: int) -> Vocab:
    """Keep the ``size - 4`` most frequent words, ties broken lexically."""
    if size < 5:
        raise ConfigError(f"vocab size must be at least 5, got {size}")
    corpus = list(corpus)
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = Counter(w for text in corpus for w in split_words(text))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocab([w for w, _ in ranked[: size - len(SPECIALS)]])


@dataclass
class TokenSeq:
    ids: np.ndarray
    mask: np.ndarray


def tokenize(text: str, vocab: Vocab, max_len: int) -> TokenSeq:
    if max_len < 2:
        raise ConfigError(f"max_len must be at least 2, got {max_len}")
    body = [vocab[w] for w in split_words(text)][: max_len - 2]
    seq = [BOS] + body + [EOS]
    ids = np.full(max_len, PAD, dtype=np.int64)
    ids[: len(seq)] = seq
    mask = np.zeros(max_len, dtype=bool)
    mask[: len(seq)] = True
    return TokenSeq(ids, mask)


@dataclass
class EncoderConfig:
    vocab_size: int = 2048
    width: int = 128
    layers: int = 4
    heads: int = 4
    max_len: int = 128
    ff_mult: int = 4

    def validate(self):
        if self.width % self.heads:
            raise ConfigError(f"encoder width {self.width} is not divisible by heads {self.heads}")
        if self.vocab_size < 5:
            raise ConfigError(f"vocab_size must be at least 5, got {self.vocab_size}")
        if self.max_len < 2:
            raise ConfigError(f"max_len must be at least 2, got {self.max_len}")
        if self.layers < 0:
            raise ConfigError(f"layers must be >= 0, got {self.layers}")


class EncoderLayer(nn.Module):
    """Pre-norm self-attention and feed-forward with residuals."""

    def __init__(self, width, heads, ff_mult):
        super().__init__()
        self.heads = heads
        self.norm1 = nn.LayerNorm(width)
        self.qkv = nn.Linear(width, 3 * width)
        self.proj = nn.Linear(width, width)
        self.norm2 = nn.LayerNorm(width)
        self.ff1 = nn.Linear(width, ff_mult * width)
        self.ff2 = nn.Linear(ff_mult * width, width)

    def forward(self, x, mask):
        B, M, W = x.shape
        hd = W // self.heads
        q, k, v = self.qkv(self.norm1(x)).split(W, dim=-1)
        q, k, v = (z.reshape(B, M, self.heads, hd).transpose(1, 2) for z in (q, k, v))
        scores = q @ k.transpose(-1, -2) / math.sqrt(hd)
        scores = scores.masked_fill(~mask[:, None, None, :], float("-inf"))
        att = torch.softmax(scores, dim=-1) @ v
        x = x + self.proj(att.transpose(1, 2).reshape(B, M, W))
        return x + self.ff2(F.gelu(self.ff1(self.norm2(x))))


class TextEncoder(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.tok = nn.Embedding(config.vocab_size, config.width)
        self.pos = nn.Embedding(config.max_len, config.width)
        self.layers = nn.ModuleList(EncoderLayer(config.width, config.heads, config.ff_mult) for _ in range(config.layers))
        self.norm = nn.LayerNorm(config.width)

    def use_frozen_embeddings(self, table):
        """Replace the token table with external embeddings and stop training it."""
        table = torch.as_tensor(table, dtype=self.tok.weight.dtype)
        if tuple(table.shape) != tuple(self.tok.weight.shape):
            raise ConfigError(f"embedding table shape {tuple(table.shape)} != {tuple(self.tok.weight.shape)}")
        with torch.no_grad():
            self.tok.weight.copy_(table)
        self.tok.weight.requires_grad_(False)

    def forward(self, ids, mask):
        """``ids``, ``mask``: (B, M). Returns final-layer states (B, M, width)."""
        if ids.numel() and (int(ids.max()) >= self.config.vocab_size or int(ids.min()) < 0):
            raise ValueError(f"token id out of range for vocab size {self.config.vocab_size}")
        if ids.shape[-1] > self.config.max_len:
            raise ValueError(f"sequence length {ids.shape[-1]} exceeds max_len {self.config.max_len}")
        mask = mask.to(torch.bool)
        positions = torch.arange(ids.shape[-1])
        x = self.tok(ids) + self.pos(positions)[None]
        for layer in self.layers:
            x = layer(x, mask)
        x = self.norm(x)
        return x * mask[..., None].to(x.dtype)


def encode_text(tokens: TokenSeq, encoder: TextEncoder):
    """Token-embedding memory (max_len, width) with padded rows zeroed, and the mask."""
    ids = torch.as_tensor(tokens.ids)[None]
    mask = torch.as_tensor(tokens.mask)[None]
    return encoder(ids, mask)[0], mask[0]
