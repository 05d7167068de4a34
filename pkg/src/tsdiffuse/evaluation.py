"""Distances between generated and reference series, and the per-subset report."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

REPORT_ROWS = ("short", "medium", "long", "creative", "resembles", "truce")
ROW_LABELS = {"short": "Short", "medium": "Medium", "long": "Long", "creative": "Creative",
              "resembles": "Resembles", "truce": "TRUCE", "all": "All"}

# Reference "All" row of the full-scale model; documentation only.
REFERENCE_ALL_ED = 30.76
REFERENCE_ALL_DTW = 14.41


def ed_l1_batch(X, Y) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape != Y.shape:
        raise ValueError(f"length mismatch: {X.shape} vs {Y.shape}")
    # left-to-right accumulation, the same order DTW uses along its diagonal path
    return np.cumsum(np.abs(X - Y), axis=1)[:, -1]


def ed_l1(x, y) -> float:
    """Sum of element-wise absolute differences."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    return float(ed_l1_batch(x[None], y[None])[0])


def dtw_asym_batch(X, Y) -> np.ndarray:
    """Asymmetric DTW for a batch of pairs, rows of ``X`` against rows of ``Y``.

    D[i, j] = |x_i - y_j| + min(D[i-1, j], D[i-1, j-1], D[i-1, j-2]), starting
    from D[0, 0] = |x_0 - y_0|; every step advances ``x`` by exactly one.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[0] != Y.shape[0]:
        raise ValueError("batch sizes differ")
    if X.shape[1] == 0 or Y.shape[1] == 0:
        raise ValueError("DTW of an empty series is undefined")
    B, m = X.shape[0], Y.shape[1]
    prev = np.full((B, m + 2), np.inf)
    prev[:, 2] = np.abs(X[:, 0] - Y[:, 0])
    cur = np.empty_like(prev)
    cur[:, :2] = np.inf
    for i in range(1, X.shape[1]):
        best = np.minimum(np.minimum(prev[:, 2:], prev[:, 1:-1]), prev[:, :-2])
        cur[:, 2:] = np.abs(X[:, i, None] - Y) + best
        prev, cur = cur, prev
    return prev[:, -1].copy()


def dtw_asym(x, y) -> float:
    return float(dtw_asym_batch(np.asarray(x, dtype=np.float64)[None], np.asarray(y, dtype=np.float64)[None])[0])


@dataclass
class ReportRow:
    subset: str
    ed: float
    dtw: float
    count: int


@dataclass
class EvalReport:
    rows: List[ReportRow] = field(default_factory=list)
    config_hash: Optional[str] = None

    def row(self, subset) -> ReportRow:
        for r in self.rows:
            if r.subset == subset:
                return r
        raise KeyError(subset)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("subset,metric,mean,count\n")
        for r in self.rows:
            buf.write(f"{r.subset},ED,{r.ed:.6f},{r.count}\n")
            buf.write(f"{r.subset},DTW,{r.dtw:.6f},{r.count}\n")
        return buf.getvalue()

    def to_table(self) -> str:
        lines = []
        if self.config_hash:
            lines.append(f"config {self.config_hash}")
        lines.append(f"{'Subset':<10} {'Metric':<6} {'Mean':>8} {'Pairs':>6}")
        lines.append("-" * 33)
        for r in self.rows:
            label = ROW_LABELS[r.subset]
            lines.append(f"{label:<10} {'ED':<6} {r.ed:>8.2f} {r.count:>6d}")
            lines.append(f"{'':<10} {'DTW':<6} {r.dtw:>8.2f} {'':>6}")
            lines.append("-" * 33)
        return "\n".join(lines) + "\n"


def evaluate(generated: Sequence, reference: Sequence, desc_types: Sequence[str], types: Optional[Sequence[str]] = None) -> EvalReport:
    """Mean ED and DTW per description type plus an overall row.

    ``types`` restricts the report to those subsets; "all" then covers only
    the selected pairs.
    """
    if not len(generated):
        raise ValueError("nothing to evaluate")
    if not len(generated) == len(reference) == len(desc_types):
        raise ValueError("generated, reference and desc_types differ in length")
    for d in desc_types:
        if d not in REPORT_ROWS:
            raise ValueError(f"unknown desc_type {d!r}")
    selected = list(REPORT_ROWS) if types is None else list(types)
    for d in selected:
        if d not in REPORT_ROWS:
            raise ValueError(f"unknown desc_type {d!r}")
    keep = [i for i, d in enumerate(desc_types) if d in selected]
    if not keep:
        raise ValueError("no pairs in the selected subsets")
    G = np.stack([np.asarray(generated[i], dtype=np.float64) for i in keep])
    R = np.stack([np.asarray(reference[i], dtype=np.float64) for i in keep])
    ed = ed_l1_batch(G, R)
    dtw = dtw_asym_batch(G, R)
    kinds = np.array([desc_types[i] for i in keep])
    report = EvalReport()
    for subset in REPORT_ROWS:
        sel = kinds == subset
        if subset in selected and sel.any():
            report.rows.append(ReportRow(subset, float(ed[sel].mean()), float(dtw[sel].mean()), int(sel.sum())))
    report.rows.append(ReportRow("all", float(ed.mean()), float(dtw.mean()), len(keep)))
    return report
