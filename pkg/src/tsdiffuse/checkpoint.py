"""Single-file checkpoint container.

Layout (all integers little-endian)::

    b"TSDCKPT\\0"             8-byte magic
    uint32  format version
    uint64  header length N
    N bytes header: canonical UTF-8 JSON with keys
            config, vocab (token list, id = index + 4), step, epoch,
            tensors ([{"name", "shape"}] in payload order)
    payload: each tensor as raw float32 little-endian, concatenated
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .conditioner import Vocab
from .config import RunConfig
from .errors import CheckpointError, CheckpointVersionError

MAGIC = b"TSDCKPT\0"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


@dataclass
class Checkpoint:
    config: RunConfig
    vocab: Vocab
    params: dict = field(default_factory=dict)
    step: int = 0
    epoch: int = 0

    @classmethod
    def from_model(cls, config, model, step=0, epoch=0):
        params = {name: t.detach().cpu().numpy().astype("<f4", copy=True) for name, t in model.state_dict().items()}
        return cls(config=config, vocab=model.vocab, params=params, step=step, epoch=epoch)

    def build_model(self, dtype=torch.float32):
        from .model import TextSeriesDiffusion

        model = TextSeriesDiffusion(self.config.denoiser_config(), self.config.encoder_config(), self.vocab)
        state = {k: torch.from_numpy(np.array(v, dtype=np.float32)) for k, v in self.params.items()}
        model.load_state_dict(state, strict=True)
        model.to(dtype)
        model.eval()
        model.check_finite()
        return model

    def config_hash(self):
        return self.config.hash()


def save_checkpoint(checkpoint: Checkpoint, path):
    names = list(checkpoint.params)
    if len(set(names)) != len(names):
        raise CheckpointError("duplicate tensor name")
    header = {
        "config": checkpoint.config.to_dict(),
        "config_hash": checkpoint.config.hash(),
        "vocab": checkpoint.vocab.tokens,
        "step": int(checkpoint.step),
        "epoch": int(checkpoint.epoch),
        "tensors": [{"name": n, "shape": list(np.shape(checkpoint.params[n]))} for n in names],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(checkpoint.params[n], dtype="<f4").tobytes())
    tmp.replace(path)
    return path


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise CheckpointError(f"{path}: truncated checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: checkpoint format version {version} is incompatible with version {FORMAT_VERSION}")
    start = _PREFIX.size
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from None
    offset = start + hlen
    params = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 4 * count
        if end > len(data):
            raise CheckpointError(f"{path}: tensor {entry['name']} runs past end of file")
        params[entry["name"]] = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape).copy()
        offset = end
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    return Checkpoint(
        config=RunConfig.from_dict(header["config"]),
        vocab=Vocab(header["vocab"]),
        params=params,
        step=header["step"],
        epoch=header["epoch"],
    )
