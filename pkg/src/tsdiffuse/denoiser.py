"""Temporal denoising U-Net with cross-attention hooks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, TrainingDiverged

ATTN_HOOKS = ("enc1", "enc2", "enc3", "enc4", "dec1", "dec2", "dec3", "dec4")


@dataclass
class DenoiserConfig:
    base_channels: int = 32
    levels: int = 4
    kernel: int = 3
    groupnorm_groups: int = 8
    attn_levels: tuple = ("enc3", "enc4", "dec1", "dec2")
    t_embed_dim: int = 64
    text_dim: int = 128

    @property
    def channels(self):
        return [self.base_channels * 2**i for i in range(self.levels)]

    def validate(self):
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be positive, got {self.base_channels}")
        if self.levels != 4:
            raise ConfigError(f"the U-Net has exactly 4 levels, got levels={self.levels}")
        if self.kernel != 3:
            raise ConfigError(f"kernel must be 3, got {self.kernel}")
        if self.t_embed_dim < 2 or self.t_embed_dim % 2:
            raise ConfigError(f"t_embed_dim must be even, got {self.t_embed_dim}")
        for c in self.channels:
            if c % self.groupnorm_groups:
                raise ConfigError(f"groupnorm_groups={self.groupnorm_groups} does not divide channel count {c}")
        unknown = set(self.attn_levels) - set(ATTN_HOOKS)
        if unknown:
            raise ConfigError(f"unknown attention hook(s): {sorted(unknown)}")


def timestep_embedding(t, dim: int, dtype=torch.float32) -> torch.Tensor:
    """Sinusoidal embedding ``[sin(t w_k), cos(t w_k)]`` with log-spaced ``w_k``.

    ``t`` may be a scalar or a 1-D tensor of steps; the result has a
    trailing axis of size ``dim``.
    """
    if dim % 2 or dim < 2:
        raise ConfigError(f"embedding dim must be even, got {dim}")
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = torch.as_tensor(t, dtype=torch.float64)[..., None] * freqs
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1).to(dtype)


class CrossAttention(nn.Module):
    """Single-head attention from feature positions (queries) to text tokens.

    The attended values are projected back to the feature width and added to
    the input, so the output keeps the feature map's shape.
    """

    def __init__(self, channels: int, text_dim: int):
        super().__init__()
        self.to_q = nn.Linear(channels, channels, bias=False)
        self.to_k = nn.Linear(text_dim, channels, bias=False)
        self.to_v = nn.Linear(text_dim, channels, bias=False)
        self.to_out = nn.Linear(channels, channels, bias=False)

    def forward(self, features, memory, mask, return_weights=False):
        # features (B, C, N); memory (B, M, D); mask (B, M) true on real tokens
        h = features.transpose(1, 2)
        q = self.to_q(h)
        k = self.to_k(memory)
        v = self.to_v(memory)
        scores = q @ k.transpose(1, 2) / math.sqrt(q.shape[-1])
        mask = mask.to(torch.bool)
        has_token = mask.any(dim=1)
        # all-masked rows: softmax over everything, then zeroed below
        safe = mask | ~has_token[:, None]
        scores = scores.masked_fill(~safe[:, None, :], float("-inf"))
        weights = torch.softmax(scores, dim=-1) * has_token[:, None, None].to(scores.dtype)
        out = self.to_out(weights @ v).transpose(1, 2)
        result = features + out
        if return_weights:
            return result, weights
        return result


class _Block(nn.Module):
    """conv -> + time projection -> GroupNorm -> SiLU"""

    def __init__(self, conv, out_ch, groups, t_dim):
        super().__init__()
        self.conv = conv
        self.time = nn.Linear(t_dim, out_ch)
        self.norm = nn.GroupNorm(groups, out_ch)

    def forward(self, x, temb, length=None):
        h = self.conv(x)
        if length is not None:
            h = h[..., :length]
        h = h + self.time(temb)[..., None]
        return F.silu(self.norm(h))


class TemporalUNet(nn.Module):
    """Four-level 1-D U-Net predicting the noise in a batch of series.

    Encoder: one stride-1 conv then three stride-2 convs (channels b, 2b, 4b,
    8b). Decoder mirrors it with transposed convs whose outputs are cropped
    to the matching encoder length, so any series length round-trips.
    """

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        config.validate()
        self.config = config
        c1, c2, c3, c4 = config.channels
        g, td = config.groupnorm_groups, config.t_embed_dim

        def down(i, o, s):
            return nn.Conv1d(i, o, 3, stride=s, padding=1)

        def up(i, o):
            return nn.ConvTranspose1d(i, o, 3, stride=2, padding=1, output_padding=1)

        self.enc1 = _Block(down(1, c1, 1), c1, g, td)
        self.enc2 = _Block(down(c1, c2, 2), c2, g, td)
        self.enc3 = _Block(down(c2, c3, 2), c3, g, td)
        self.enc4 = _Block(down(c3, c4, 2), c4, g, td)
        self.dec1 = _Block(up(c4, c3), c3, g, td)
        self.dec2 = _Block(up(2 * c3, c2), c2, g, td)
        self.dec3 = _Block(up(2 * c2, c1), c1, g, td)
        self.dec4 = _Block(nn.ConvTranspose1d(2 * c1, c1, 3, stride=1, padding=1), c1, g, td)
        self.out = nn.Conv1d(c1, 1, 1)
        widths = dict(enc1=c1, enc2=c2, enc3=c3, enc4=c4, dec1=c3, dec2=c2, dec3=c1, dec4=c1)
        self.attn = nn.ModuleDict({name: CrossAttention(widths[name], config.text_dim) for name in config.attn_levels})

    def _hook(self, name, h, memory, mask):
        if name in self.attn:
            return self.attn[name](h, memory, mask)
        return h

    def forward(self, x, t, memory, mask):
        """``x`` (B, L), ``t`` (B,) steps, ``memory`` (B, M, D), ``mask`` (B, M)."""
        temb = timestep_embedding(t, self.config.t_embed_dim, dtype=x.dtype)
        h = x[:, None, :]
        e1 = self._hook("enc1", self.enc1(h, temb), memory, mask)
        e2 = self._hook("enc2", self.enc2(e1, temb), memory, mask)
        e3 = self._hook("enc3", self.enc3(e2, temb), memory, mask)
        e4 = self._hook("enc4", self.enc4(e3, temb), memory, mask)
        d = self._hook("dec1", self.dec1(e4, temb, e3.shape[-1]), memory, mask)
        d = self._hook("dec2", self.dec2(torch.cat([d, e3], 1), temb, e2.shape[-1]), memory, mask)
        d = self._hook("dec3", self.dec3(torch.cat([d, e2], 1), temb, e1.shape[-1]), memory, mask)
        d = self._hook("dec4", self.dec4(torch.cat([d, e1], 1), temb), memory, mask)
        return self.out(d)[:, 0, :]


def denoise(unet: TemporalUNet, x_t, t, text_memory, mask):
    """Noise prediction for a single series or a batch.

    A 1-D ``x_t`` is treated as a batch of one with ``text_memory`` (M, D)
    and ``mask`` (M,); the result matches the input's shape.
    """
    for p in unet.parameters():
        if not torch.isfinite(p).all():
            raise TrainingDiverged("denoiser weights contain non-finite values")
    x = torch.as_tensor(x_t)
    single = x.ndim == 1
    if single:
        x = x[None]
        text_memory = torch.as_tensor(text_memory)[None]
        mask = torch.as_tensor(mask)[None]
    t = torch.as_tensor(t).reshape(-1).expand(x.shape[0])
    if text_memory.shape[:2] != mask.shape:
        raise ValueError(f"text memory rows {tuple(text_memory.shape[:2])} do not match mask {tuple(mask.shape)}")
    out = unet(x, t, text_memory, mask)
    return out[0] if single else out
