"""Corpus construction: synthetic series, ingestion pipelines, captions, splits, JSONL."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .captions import DESC_TYPES, TemplateCaptioner, template_caption
from .errors import CorpusError

log = logging.getLogger(__name__)

SOURCES = ("stock", "ucr", "synthetic", "truce")
ALL_DESC_TYPES = DESC_TYPES + ("truce",)
SYNTH_KINDS = ("linear", "quadratic", "cubic", "sinusoidal")
RECORD_FIELDS = ("id", "source", "desc_type", "text", "series")


@dataclass
class Series:
    """Normalized values plus the affine mapping them back to source units."""

    values: np.ndarray
    offset: float = 0.0
    scale: float = 1.0
    degenerate: bool = False

    def denormalize(self):
        return self.values * self.scale + self.offset


@dataclass
class PairRecord:
    id: str
    source: str
    desc_type: str
    text: str
    series: Sequence[float]

    @property
    def group(self) -> str:
        """Identifier of the underlying series (all descriptions share it)."""
        return self.id.rsplit(":", 1)[0]

    def validate(self, length: int = 100):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if self.desc_type not in ALL_DESC_TYPES:
            raise ValueError(f"unknown desc_type {self.desc_type!r}")
        if (self.desc_type == "truce") != (self.source == "truce"):
            raise ValueError(f"desc_type {self.desc_type!r} does not match source {self.source!r}")
        if not isinstance(self.text, str) or not self.text.strip():
            raise ValueError("text must be a nonempty string")
        values = np.asarray(self.series, dtype=np.float64)
        if values.shape != (length,):
            raise ValueError(f"series has length {values.size}, expected {length}")
        if not np.isfinite(values).all():
            raise ValueError("series contains non-finite values")

    def to_json(self) -> str:
        data = {
            "id": self.id,
            "source": self.source,
            "desc_type": self.desc_type,
            "text": self.text,
            "series": [float(v) for v in self.series],
        }
        return json.dumps(data, ensure_ascii=False)


# --------------------------------------------------------------------------
# synthetic functions


@dataclass(frozen=True)
class SynthSpec:
    kind: str
    m: float
    index: int = 0

    @property
    def series_id(self):
        return f"synthetic-{self.kind}-{self.index:03d}"


def u_grid(length: int = 100) -> np.ndarray:
    return np.linspace(-1.0, 1.0, length)


def synth_param_grid(kind: str) -> np.ndarray:
    """Coefficient values for one synthetic family.

    Linear: 100 evenly spaced values on [-1, 1]. Others: entries 1-41 and
    61-101 (1-based) of 101 evenly spaced values on [-1, 1] (or [-pi, pi]
    for sinusoids), dropping the near-zero middle band.
    """
    if kind == "linear":
        return np.linspace(-1.0, 1.0, 100)
    if kind in ("quadratic", "cubic", "sinusoidal"):
        top = math.pi if kind == "sinusoidal" else 1.0
        full = np.linspace(-top, top, 101)
        return np.concatenate([full[0:41], full[60:101]])
    raise ValueError(f"unknown synthetic kind {kind!r}")


def synth_eval(kind: str, m: float, u: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return m * u
    if kind == "quadratic":
        return m * u**2
    if kind == "cubic":
        return m * u**3
    if kind == "sinusoidal":
        return np.sin(m * u)
    raise ValueError(f"unknown synthetic kind {kind!r}")


def gen_synthetic(length: int = 100):
    """All synthetic series as ``(SynthSpec, values)`` pairs, 346 for the default grids."""
    u = u_grid(length)
    out = []
    for kind in SYNTH_KINDS:
        for i, m in enumerate(synth_param_grid(kind)):
            spec = SynthSpec(kind, float(m), i)
            out.append((spec, synth_eval(kind, spec.m, u)))
    return out


def synthetic_records(length: int = 100) -> List[PairRecord]:
    records = []
    for spec, values in gen_synthetic(length):
        for desc_type, text in zip(DESC_TYPES, template_caption(spec)):
            records.append(PairRecord(f"{spec.series_id}:{desc_type}", "synthetic", desc_type, text, values))
    return records


# --------------------------------------------------------------------------
# series transforms


def resample_linear(series, L: int) -> np.ndarray:
    """Linear interpolation onto ``L`` evenly spaced positions spanning the input."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError(f"need at least 2 points to resample, got {x.size}")
    if L < 2:
        raise ValueError(f"target length must be >= 2, got {L}")
    n = x.size
    pos = np.linspace(0.0, n - 1, L)
    out = np.interp(pos, np.arange(n, dtype=np.float64), x)
    out[0], out[-1] = x[0], x[-1]
    return out


def window_series(values, valid=None, L: int = 100, stride: int = 100) -> List[np.ndarray]:
    """Stride-aligned length-``L`` windows containing only valid points."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    x = np.asarray(values, dtype=np.float64)
    ok = np.isfinite(x) if valid is None else np.asarray(valid, dtype=bool) & np.isfinite(x)
    bad = np.concatenate([[0], np.cumsum(~ok)])
    return [x[s:s + L].copy() for s in range(0, x.size - L + 1, stride) if bad[s + L] == bad[s]]


def normalize(series) -> Series:
    """Min-max map to [-1, 1]; constant input maps to zeros with scale 0."""
    x = np.asarray(series, dtype=np.float64)
    if x.size < 1:
        raise ValueError("cannot normalize an empty series")
    if not np.isfinite(x).all():
        raise ValueError("cannot normalize a series with non-finite values")
    lo, hi = float(x.min()), float(x.max())
    offset = (hi + lo) / 2.0
    scale = (hi - lo) / 2.0
    if scale == 0.0:
        return Series(np.zeros_like(x), offset, 0.0, True)
    return Series(np.clip((x - offset) / scale, -1.0, 1.0), offset, scale)


def denormalize(series: Series) -> np.ndarray:
    return series.denormalize()


# --------------------------------------------------------------------------
# ingestion


def _caption_records(group_id, source, values, captioner):
    texts = captioner.caption(values)
    return [PairRecord(f"{group_id}:{d}", source, d, t, values) for d, t in zip(DESC_TYPES, texts)]


def read_value_csv(path):
    """Read ``timestamp,value`` rows; blank or non-numeric values are invalid points."""
    values, valid = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            raw = row[1].strip() if len(row) > 1 else ""
            try:
                v = float(raw)
            except ValueError:
                if not values and not valid:
                    continue  # header line
                v = math.nan
            values.append(v)
            valid.append(math.isfinite(v))
    return np.array(values, dtype=np.float64), np.array(valid, dtype=bool)


def stock_records(paths: Iterable, rng: np.random.Generator, length=100, stride=100, fraction=1.0, captioner=None):
    captioner = captioner or TemplateCaptioner()
    windows = []
    for path in sorted(Path(p) for p in paths):
        values, valid = read_value_csv(path)
        for k, w in enumerate(window_series(values, valid, length, stride)):
            windows.append((f"stock-{path.stem}-{k * stride:06d}", w))
    if fraction < 1.0 and windows:
        keep = max(1, int(round(len(windows) * fraction)))
        chosen = np.sort(rng.choice(len(windows), size=keep, replace=False))
        windows = [windows[i] for i in chosen]
    records = []
    for gid, w in windows:
        records += _caption_records(gid, "stock", normalize(w).values, captioner)
    return records


def _read_ucr_rows(path):
    rows = []
    delim = "\t" if path.suffix == ".tsv" else None
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        parts = line.replace(",", " ").split(delim) if delim is None else line.split(delim)
        nums = np.array([float(p) if p.strip() else math.nan for p in parts[1:]], dtype=np.float64)
        rows.append(nums[np.isfinite(nums)])
    return rows


def ucr_records(root, rng: np.random.Generator, length=100, per_dataset=50, captioner=None):
    """Up to ``per_dataset`` random training series from each ``<Name>/<Name>_TRAIN.*`` file."""
    captioner = captioner or TemplateCaptioner()
    root = Path(root)
    records = []
    for train in sorted(root.glob("*/*_TRAIN.*")):
        name = train.parent.name
        rows = _read_ucr_rows(train)
        idx = np.arange(len(rows))
        if len(rows) > per_dataset:
            idx = np.sort(rng.choice(len(rows), size=per_dataset, replace=False))
        for i in idx:
            if rows[i].size < 2:
                log.warning("%s row %d has fewer than 2 values; skipped", train, i)
                continue
            values = normalize(resample_linear(rows[i], length)).values
            records += _caption_records(f"ucr-{name}-{i:04d}", "ucr", values, captioner)
    return records


def truce_records(path, length=100):
    """TRUCE-style items: JSON list or JSON lines of ``{"series": [...], "captions": [...]}``."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        items = json.loads(text)
    else:
        items = [json.loads(line) for line in text.splitlines() if line.strip()]
    records = []
    for n, item in enumerate(items):
        series = item.get("series")
        captions = item.get("captions") or item.get("texts") or []
        values = normalize(resample_linear(series, length)).values
        for k, caption in enumerate(captions):
            if caption and caption.strip():
                records.append(PairRecord(f"truce-{n:05d}:{k}", "truce", "truce", caption.strip(), values))
    return records


# --------------------------------------------------------------------------
# splitting and persistence


def split_grouped(records, test_fraction: float, seed: int, rounding: str = "floor"):
    """Partition records by series so no series appears on both sides."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    groups = sorted({r.group for r in records})
    if len(groups) < 2:
        raise ValueError(f"need at least 2 series to split, got {len(groups)}")
    raw = len(groups) * test_fraction
    n_test = math.floor(raw) if rounding == "floor" else int(math.floor(raw + 0.5))
    order = np.random.default_rng(seed).permutation(len(groups))
    test_groups = {groups[i] for i in order[:n_test]}
    train = sorted((r for r in records if r.group not in test_groups), key=lambda r: r.id)
    test = sorted((r for r in records if r.group in test_groups), key=lambda r: r.id)
    return train, test


def write_jsonl(records, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in sorted(records, key=lambda r: r.id):
            fh.write(r.to_json() + "\n")
    return path


def read_jsonl(path, length: Optional[int] = 100) -> List[PairRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"invalid JSON: {exc.msg}", path, lineno) from None
            if not isinstance(data, dict) or set(data) != set(RECORD_FIELDS):
                keys = sorted(data) if isinstance(data, dict) else type(data).__name__
                raise CorpusError(f"expected fields {list(RECORD_FIELDS)}, got {keys}", path, lineno)
            record = PairRecord(**data)
            try:
                record.validate(length if length is not None else len(record.series))
            except (ValueError, TypeError) as exc:
                raise CorpusError(str(exc), path, lineno) from None
            record.series = np.asarray(record.series, dtype=np.float64)
            records.append(record)
    return records
