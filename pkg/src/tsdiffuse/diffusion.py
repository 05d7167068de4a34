"""Gaussian diffusion over fixed-length series.

Forward (noising) process, for a schedule of T steps with step index t in 1..T:

    q(x_t | x_{t-1}) = N(sqrt(alpha_t) x_{t-1}, (1 - alpha_t) I)
    x_t = sqrt(alpha_bar_t) x_0 + sqrt(1 - alpha_bar_t) eps        (closed form)

Training minimises the mean squared error between eps and the network's
prediction. Sampling runs the reverse chain

    x_{t-1} = (x_t - beta_t / sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_t) + sigma_t z

with sigma_t^2 = beta_t and no noise on the final step.

Functions in this module accept numpy arrays or torch tensors for series
values; randomness always comes from an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from .errors import ConfigError, TrainingDiverged

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise tables. Arrays are indexed 0..T-1 for steps 1..T."""

    betas: np.ndarray
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size == 0:
            raise ConfigError("betas must be a non-empty vector")
        # build_schedule enforces the open interval; [0, 1] admits limit cases
        if np.any(betas < 0) or np.any(betas > 1):
            raise ConfigError("betas must lie in [0, 1]")
        alphas = 1.0 - betas
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_bars", np.cumprod(alphas))

    @property
    def T(self) -> int:
        return int(self.betas.size)

    def check_step(self, t) -> np.ndarray:
        steps = np.asarray(t)
        if steps.size == 0 or np.any(steps < 1) or np.any(steps > self.T):
            raise ValueError(f"step index {t!r} outside [1, {self.T}]")
        return steps.astype(np.int64)


def build_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule from ``beta_start`` to ``beta_end`` inclusive."""
    if int(T) != T or T < 1:
        raise ConfigError(f"T must be a positive integer, got {T!r}")
    if not 0 < beta_start:
        raise ConfigError(f"beta_start must be > 0, got {beta_start!r}")
    if not beta_start <= beta_end:
        raise ConfigError(f"beta_end must be >= beta_start, got beta_end={beta_end!r}")
    if not beta_end < 1:
        raise ConfigError(f"beta_end must be < 1, got {beta_end!r}")
    return NoiseSchedule(np.linspace(beta_start, beta_end, int(T), dtype=np.float64))


def _coef(values: np.ndarray, like):
    """Broadcast per-row coefficients against ``like`` (1-D series or batch)."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values.reshape((-1,) + (1,) * (like.ndim - 1))
    if isinstance(like, torch.Tensor):
        return torch.as_tensor(values, dtype=like.dtype, device=like.device)
    return values


def _noise_like(x, rng: np.random.Generator):
    z = rng.standard_normal(tuple(x.shape))
    if isinstance(x, torch.Tensor):
        return torch.as_tensor(z, dtype=x.dtype, device=x.device)
    return z


def forward_sample(x0, t, eps, schedule: NoiseSchedule):
    """Noise ``x0`` directly to step ``t``.

    ``t`` may be an int or, for a batch ``x0`` of shape (B, L), a length-B
    sequence of steps.
    """
    steps = schedule.check_step(t)
    if tuple(eps.shape) != tuple(x0.shape):
        raise ValueError(f"eps shape {tuple(eps.shape)} != x0 shape {tuple(x0.shape)}")
    ab = schedule.alpha_bars[steps - 1]
    return _coef(np.sqrt(ab), x0) * x0 + _coef(np.sqrt(1.0 - ab), x0) * eps


def forward_step(x_prev, t: int, schedule: NoiseSchedule, rng: np.random.Generator):
    """One Markov noising step from ``x_{t-1}`` to ``x_t``."""
    (step,) = np.atleast_1d(schedule.check_step(t))
    a = schedule.alphas[step - 1]
    return math.sqrt(a) * x_prev + math.sqrt(1.0 - a) * _noise_like(x_prev, rng)


def reverse_step(x_t, t: int, eps_hat, schedule: NoiseSchedule, rng=None, noise=None):
    """One ancestral sampling step from ``x_t`` to ``x_{t-1}``.

    Noise for t > 1 comes from ``noise`` when given, else from ``rng``.
    """
    (step,) = np.atleast_1d(schedule.check_step(t))
    finite = torch.isfinite(eps_hat).all() if isinstance(eps_hat, torch.Tensor) else np.isfinite(eps_hat).all()
    if not bool(finite):
        raise TrainingDiverged(f"non-finite noise prediction at step {step}", step=int(step))
    a = schedule.alphas[step - 1]
    b = schedule.betas[step - 1]
    ab = schedule.alpha_bars[step - 1]
    # beta=0 with alpha_bar=1 leaves x_t untouched
    scale = b / math.sqrt(1.0 - ab) if b > 0 else 0.0
    mean = (x_t - scale * eps_hat) / math.sqrt(a)
    if step == 1:
        return mean
    if noise is None:
        if rng is None:
            raise ValueError("reverse_step needs rng or noise for t > 1")
        noise = _noise_like(x_t, rng)
    return mean + math.sqrt(b) * noise


# --------------------------------------------------------------------------
# training objective and loop


def _as_batch(records, length: Optional[int] = None):
    series = [np.asarray(r.series, dtype=np.float64) for r in records]
    if not series:
        raise ValueError("batch is empty")
    expected = length if length is not None else series[0].size
    for r, s in zip(records, series):
        if s.ndim != 1 or s.size != expected:
            raise ValueError(f"record {r.id!r} has series length {s.size}, expected {expected}")
    return np.stack(series)


def training_loss(records, model, schedule: NoiseSchedule, rng: np.random.Generator, length=None):
    """Mean squared noise-prediction error over a batch of pair records.

    ``model`` must provide ``predict_noise(x_t, t, texts)`` returning a tensor
    shaped like ``x_t``; ``t`` is a LongTensor of 1-based steps.
    """
    x0_np = _as_batch(records, length)
    n, L = x0_np.shape
    t_np = rng.integers(1, schedule.T + 1, size=n)
    eps_np = rng.standard_normal((n, L))
    dtype = getattr(model, "dtype", torch.float32)
    x0 = torch.as_tensor(x0_np, dtype=dtype)
    eps = torch.as_tensor(eps_np, dtype=dtype)
    x_t = forward_sample(x0, t_np, eps, schedule)
    texts = [r.text for r in records]
    eps_hat = model.predict_noise(x_t, torch.as_tensor(t_np), texts)
    return torch.mean((eps - eps_hat) ** 2)


@torch.no_grad()
def sample_batch(model, prompts: Sequence[str], schedule: NoiseSchedule, rngs: Sequence[np.random.Generator], length: int):
    """Draw one series per prompt; row ``i`` uses only ``rngs[i]``."""
    if len(prompts) != len(rngs):
        raise ValueError("need one rng per prompt")
    memory, mask = model.encode_prompts(list(prompts))
    dtype = model.dtype
    x = torch.as_tensor(np.stack([r.standard_normal(length) for r in rngs]), dtype=dtype)
    for t in range(schedule.T, 0, -1):
        steps = torch.full((len(prompts),), t, dtype=torch.long)
        eps_hat = model.denoise(x, steps, memory, mask)
        noise = None
        if t > 1:
            noise = torch.as_tensor(np.stack([r.standard_normal(length) for r in rngs]), dtype=dtype)
        x = reverse_step(x, t, eps_hat, schedule, noise=noise)
    return x.double().numpy()


def sample(prompt: str, checkpoint, rng: np.random.Generator, model=None) -> np.ndarray:
    """Generate one series for ``prompt`` from a checkpoint.

    Pass ``model`` to reuse an already-built network for the checkpoint.
    """
    model = model if model is not None else checkpoint.build_model()
    ids, _ = model.tokenize(prompt)
    if not any(i > 3 for i in ids):
        log.warning("prompt %r has no in-vocabulary tokens; conditioning on special tokens only", prompt)
    schedule = checkpoint.config.schedule.build()
    return sample_batch(model, [prompt], schedule, [rng], checkpoint.config.length)[0]


@dataclass
class LossRow:
    step: int
    epoch: int
    loss: float


def train(
    config,
    dataset,
    rng: np.random.Generator,
    init=None,
    on_step: Optional[Callable[[LossRow], None]] = None,
    on_epoch: Optional[Callable[[object, float], None]] = None,
):
    """Fit the denoiser and text encoder with Adam on ``dataset``.

    ``init`` resumes from an existing checkpoint; otherwise a fresh model is
    built from ``config`` with a vocabulary over the dataset texts. Returns
    the final checkpoint. ``on_epoch(checkpoint, mean_epoch_loss)`` fires
    after every epoch.
    """
    from .checkpoint import Checkpoint
    from .conditioner import build_vocab
    from .model import TextSeriesDiffusion

    records = list(dataset)
    if not records:
        raise ValueError("dataset is empty")
    config.validate()
    tcfg = config.trainer
    schedule = config.schedule.build()

    if init is None:
        vocab = build_vocab([r.text for r in records], config.conditioner.vocab_size)
        model = TextSeriesDiffusion.create(config, vocab, rng)
        checkpoint = Checkpoint.from_model(config, model, step=0, epoch=0)
    else:
        checkpoint = init
        model = checkpoint.build_model()
    if tcfg.epochs == 0:
        return checkpoint

    optimizer = torch.optim.Adam(model.parameters(), lr=tcfg.lr)
    step, epoch0 = checkpoint.step, checkpoint.epoch
    model.train()
    for epoch in range(epoch0 + 1, epoch0 + tcfg.epochs + 1):
        order = rng.permutation(len(records))
        total, count = 0.0, 0
        for start in range(0, len(order), tcfg.batch_size):
            batch = [records[i] for i in order[start:start + tcfg.batch_size]]
            loss = training_loss(batch, model, schedule, rng, config.length)
            value = float(loss.detach())
            step += 1
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss {value} at step {step} (epoch {epoch})", step=step)
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            total += value * len(batch)
            count += len(batch)
            if on_step is not None:
                on_step(LossRow(step, epoch, value))
        checkpoint = Checkpoint.from_model(config, model, step=step, epoch=epoch)
        if on_epoch is not None:
            on_epoch(checkpoint, total / count)
    model.eval()
    return checkpoint
