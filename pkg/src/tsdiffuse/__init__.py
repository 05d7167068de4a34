"""Text-conditioned time-series generation with a temporal diffusion U-Net."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .conditioner import Vocab, build_vocab, encode_text, tokenize
from .config import RunConfig, load_config
from .diffusion import (
    NoiseSchedule,
    build_schedule,
    forward_sample,
    forward_step,
    reverse_step,
    sample,
    train,
    training_loss,
)
from .evaluation import dtw_asym, ed_l1, evaluate
from .forge import PairRecord, gen_synthetic, normalize, resample_linear, split_grouped, window_series

__version__ = "0.1.0"
