"""Minimal SVG line plots (no raster/image dependencies)."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 800, 300
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 60, 20, 40, 30
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v):
    return f"{v:.2f}".rstrip("0").rstrip(".") if abs(v) < 1e6 else f"{v:.3g}"


def render_svg(series_list, title="", config_hash=None) -> str:
    """Plot one polyline per series on a shared y axis with ticks at min, 0, max."""
    arrays = [np.asarray(s, dtype=np.float64) for s in series_list]
    if not arrays:
        raise ValueError("nothing to plot")
    lo = min(float(a.min()) for a in arrays)
    hi = max(float(a.max()) for a in arrays)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    pw = WIDTH - _MARGIN_L - _MARGIN_R
    ph = HEIGHT - _MARGIN_T - _MARGIN_B

    def y_of(v):
        return _MARGIN_T + (hi - v) / (hi - lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">',
    ]
    if config_hash:
        out.append(f"<metadata>config_hash={escape(config_hash)}</metadata>")
    out.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>')
    x0, x1 = _MARGIN_L, WIDTH - _MARGIN_R
    out.append(f'<line x1="{x0}" y1="{_MARGIN_T}" x2="{x0}" y2="{HEIGHT - _MARGIN_B}" stroke="black"/>')
    ticks = [lo, hi] + ([0.0] if lo < 0.0 < hi else [])
    for v in sorted(ticks):
        y = y_of(v)
        out.append(f'<line x1="{x0 - 5}" y1="{y:.2f}" x2="{x1}" y2="{y:.2f}" stroke="#dddddd"/>')
        out.append(f'<text x="{x0 - 8}" y="{y + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="11">{_fmt(v)}</text>')
    for k, a in enumerate(arrays):
        n = a.size
        xs = [x0 + (i / (n - 1) if n > 1 else 0.5) * pw for i in range(n)]
        pts = " ".join(f"{x:.2f},{y_of(v):.2f}" for x, v in zip(xs, a))
        out.append(f'<polyline fill="none" stroke="{_COLORS[k % len(_COLORS)]}" stroke-width="1.5" points="{pts}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
