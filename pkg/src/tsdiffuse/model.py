"""The full text-conditioned noise predictor: text encoder + temporal U-Net."""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn

from .conditioner import EncoderConfig, TextEncoder, Vocab, tokenize
from .denoiser import TemporalUNet
from .errors import TrainingDiverged


class TextSeriesDiffusion(nn.Module):
    def __init__(self, denoiser_config, encoder_config: EncoderConfig, vocab: Vocab):
        super().__init__()
        if len(vocab) > encoder_config.vocab_size:
            raise ValueError(f"vocabulary has {len(vocab)} ids but encoder holds {encoder_config.vocab_size}")
        self.vocab = vocab
        self.encoder = TextEncoder(encoder_config)
        self.unet = TemporalUNet(denoiser_config)

    @classmethod
    def create(cls, config, vocab, rng: np.random.Generator):
        model = cls(config.denoiser_config(), config.encoder_config(), vocab)
        init_parameters(model, torch.Generator().manual_seed(int(rng.integers(2**63 - 1))))
        return model

    @property
    def dtype(self):
        return self.unet.out.weight.dtype

    def tokenize(self, text):
        seq = tokenize(text, self.vocab, self.encoder.config.max_len)
        return seq.ids, seq.mask

    def encode_prompts(self, texts):
        seqs = [self.tokenize(t) for t in texts]
        ids = torch.as_tensor(np.stack([s[0] for s in seqs]))
        mask = torch.as_tensor(np.stack([s[1] for s in seqs]))
        # trailing all-pad columns carry no information
        keep = int(mask.sum(dim=1).max())
        ids, mask = ids[:, :keep], mask[:, :keep]
        return self.encoder(ids, mask), mask

    def denoise(self, x_t, t, memory, mask):
        return self.unet(x_t, t, memory, mask)

    def predict_noise(self, x_t, t, texts):
        memory, mask = self.encode_prompts(texts)
        return self.unet(x_t, t, memory, mask)

    def check_finite(self):
        for name, p in self.named_parameters():
            if not torch.isfinite(p).all():
                raise TrainingDiverged(f"parameter {name} contains non-finite values")


def init_parameters(model: nn.Module, generator: torch.Generator, zero_output=True):
    """Fan-in scaled uniform init for all weights, unit/zero norms.

    The U-Net's final projection starts at zero so the fresh model predicts
    zero noise.
    """
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (nn.LayerNorm, nn.GroupNorm)):
                module.weight.fill_(1.0)
                module.bias.zero_()
            elif isinstance(module, nn.Embedding):
                module.weight.uniform_(-1.0, 1.0, generator=generator)
            elif isinstance(module, (nn.Linear, nn.Conv1d, nn.ConvTranspose1d)):
                fan_in, _ = nn.init._calculate_fan_in_and_fan_out(module.weight)
                if isinstance(module, nn.ConvTranspose1d):
                    fan_in = module.in_channels * module.kernel_size[0]
                bound = 1.0 / math.sqrt(fan_in)
                module.weight.uniform_(-bound, bound, generator=generator)
                if module.bias is not None:
                    module.bias.uniform_(-bound, bound, generator=generator)
        unet = getattr(model, "unet", model if isinstance(model, TemporalUNet) else None)
        if zero_output and unet is not None:
            unet.out.weight.zero_()
            unet.out.bias.zero_()
