"""Description generation: deterministic templates and an external-provider adapter.

Every captioner yields five texts, one per description type, in the order
short, medium, long, creative, resembles.
"""

from __future__ import annotations

import math
import re
from typing import Protocol

import numpy as np

from .errors import CaptionerError, CaptionParseError
from .plotting import render_svg

DESC_TYPES = ("short", "medium", "long", "creative", "resembles")

CAPTION_PROMPT = (
    "Describe this time series with a short, medium, and long description. "
    "Make sure to describe the overall trends and changes in direction of the line. "
    "Also, a creative description and a description of what it resembles."
)


def _bucket(magnitude, top):
    frac = magnitude / top
    if frac < 1 / 3:
        return 0
    if frac < 2 / 3:
        return 1
    return 2


def template_caption(spec, m=None):
    """Five fixed-template texts for a synthetic series.

    Accepts a ``SynthSpec`` or a ``(kind, m)`` pair.
    """
    kind = spec
    if m is None:
        kind, m = spec.kind, spec.m
    if m == 0:
        raise ValueError("coefficient must be nonzero")
    up = m > 0
    if kind == "linear":
        b = _bucket(abs(m), 1.0)
        adv = ("gently", "steadily", "steeply")[b]
        d = "increasing" if up else "decreasing"
        verb = "rises" if up else "falls"
        start, end = -m, m
        return (
            f"a line {d} {adv}",
            f"A straight line that {verb} {adv} at a constant rate, starting near {start:.1f} and ending near {end:.1f}.",
            f"The series is a straight line {d} {adv} from start to finish. It begins around {start:.1f}, "
            f"{verb} at the same rate the whole way with no changes in direction, and ends around {end:.1f}.",
            ("A patient climb up an even slope, never pausing or turning back."
             if up else "A smooth slide down an even slope, never pausing or turning back.")
            if b < 2 else
            ("A rocket lifting off in a perfectly straight path toward the sky."
             if up else "A stone dropping straight down a sheer cliff face."),
            ("It resembles a ramp going up." if up else "It resembles a ramp going down.")
            if b < 2 else
            ("It resembles a steep staircase rail going up." if up else "It resembles a steep ski slope heading down."),
        )
    if kind == "quadratic":
        b = _bucket(abs(m), 1.0)
        depth = ("shallow", "moderate", "deep")[b]
        if up:
            shape, first, second, ext = "U-shaped curve", "falls", "rises", "minimum"
        else:
            shape, first, second, ext = "upside-down U-shaped curve", "rises", "falls", "maximum"
        return (
            f"a {depth} {shape}",
            f"A {depth} {shape} that {first} toward a {ext} in the middle and then {second} symmetrically.",
            f"The series forms a {depth} {shape}. It {first} smoothly during the first half, reaches its {ext} "
            f"exactly in the middle, and then {second} again, mirroring the first half and ending where it started.",
            ("A ball rolling down into a valley and back up the other side."
             if up else "A ball tossed upward that arcs over and falls back down."),
            (f"It resembles a {depth} valley or bowl." if up else f"It resembles a {depth} hill or arch."),
        )
    if kind == "cubic":
        b = _bucket(abs(m), 1.0)
        adv = ("slightly", "moderately", "strongly")[b]
        d = "increasing" if up else "decreasing"
        verb = "rises" if up else "falls"
        return (
            f"an S-shaped curve {d} {adv}",
            f"An S-shaped curve that {verb} quickly at first, flattens out in the middle, and then {verb} quickly again.",
            f"The series is an S-shaped cubic curve {d} {adv}. It {verb} fast at the start, levels off into a nearly "
            f"flat plateau around the middle, and then {verb} fast again toward the end without ever changing direction.",
            ("A runner sprinting, catching breath on a landing, then sprinting up again."
             if up else "A sled racing downhill, coasting across a flat stretch, then plunging down again."),
            ("It resembles a staircase step going up." if up else "It resembles a staircase step going down."),
        )
    if kind == "sinusoidal":
        b = _bucket(abs(m), math.pi)
        if abs(m) <= math.pi / 2:
            d = "rising" if up else "falling"
            return (
                f"a wave segment {d} smoothly",
                f"A smooth wave segment {d} from start to end with slight curvature near the ends.",
                f"The series is part of a sine wave {d} smoothly over the whole window. The slope is strongest "
                f"in the middle and eases off slightly toward both ends, with no change in direction.",
                ("A tide slowly coming in." if up else "A tide slowly going out."),
                "It resembles a gently sloping wave segment.",
            )
        if up:
            first, peak, last = "dips to a trough", "climbs to a peak", "turns down"
        else:
            first, peak, last = "rises to a peak", "drops to a trough", "turns up"
        strength = ("gentle", "clear", "full")[b]
        return (
            f"a {strength} wave that {first} then {peak}",
            f"A {strength} wave that {first}, {peak}, and {last} again near the end.",
            f"The series follows a {strength} sinusoidal wave. It first {first}, then {peak} in the second half, "
            f"and finally {last} near the end, giving two changes in direction over the window.",
            "An ocean swell rolling past, lifting and lowering in a single breath.",
            "It resembles a single wave cycle.",
        )
    raise ValueError(f"unknown synthetic kind {kind!r}")


def describe_series(values):
    """Five template texts for an arbitrary normalized series.

    Reports overall direction, where the extremes sit, and how often the
    smoothed series changes direction.
    """
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    k = max(1, n // 10)
    smooth = np.convolve(x, np.ones(k) / k, mode="valid")
    diffs = np.diff(smooth)
    signs = np.sign(diffs[np.abs(diffs) > 1e-3])
    turns = int(np.count_nonzero(signs[1:] != signs[:-1])) if signs.size > 1 else 0
    delta = x[-1] - x[0]
    if abs(delta) < 0.2:
        trend, verb = "flat overall", "stays roughly level"
    elif delta > 0:
        trend, verb = "increasing overall", "rises"
    else:
        trend, verb = "decreasing overall", "falls"
    where = ("beginning", "middle", "end")
    hi_at = where[min(2, int(3 * np.argmax(x) / n))]
    lo_at = where[min(2, int(3 * np.argmin(x) / n))]
    if turns == 0:
        texture = "smooth with no changes in direction"
        creative = "A calm journey along a single road."
        resembles = "It resembles a simple slope."
    elif turns <= 3:
        texture = f"a few changes in direction ({turns})"
        creative = "A hiker crossing a handful of hills and valleys."
        resembles = "It resembles a few rolling hills."
    else:
        texture = f"many changes in direction ({turns})"
        creative = "A restless line dancing up and down like a nervous heartbeat."
        resembles = "It resembles a jagged mountain range or noisy signal."
    return (
        f"a series {trend}",
        f"A series that {verb} from start to end with {texture}.",
        f"The series {verb} from start to end with {texture}. Its highest point is near the {hi_at} "
        f"and its lowest point is near the {lo_at}.",
        creative,
        resembles,
    )


class CaptionerClient(Protocol):
    def submit(self, image: bytes, mime_type: str, prompt: str) -> str:
        """Send a rendered series plus instruction, return the provider's raw text."""


class TemplateCaptioner:
    """Deterministic stand-in for an external captioner; answers in the labeled format."""

    def submit(self, image: bytes, mime_type: str, prompt: str) -> str:
        raise CaptionerError("TemplateCaptioner captions series values directly; use caption()")

    def caption(self, values):
        return describe_series(values)


class MockCaptioner:
    """Returns a fixed payload; records what was submitted."""

    def __init__(self, payload: str):
        self.payload = payload
        self.calls = []

    def submit(self, image: bytes, mime_type: str, prompt: str) -> str:
        self.calls.append((image, mime_type, prompt))
        return self.payload


_LABEL = re.compile(
    r"^[\s*#>\-\d.]*(short|medium|long|creative|resembles?|resemblance)\b[^:\n]*:\s*\**\s*(.+?)\s*$",
    re.IGNORECASE | re.MULTILINE,
)


def parse_descriptions(text: str):
    """Pull the five labeled descriptions out of a provider response."""
    found = {}
    for label, body in _LABEL.findall(text):
        key = label.lower()
        if key.startswith("resembl"):
            key = "resembles"
        found.setdefault(key, body.strip())
    missing = [d for d in DESC_TYPES if not found.get(d)]
    if missing:
        raise CaptionParseError(missing)
    return tuple(found[d] for d in DESC_TYPES)


def annotate_external(series, client: CaptionerClient, prompt_text: str = CAPTION_PROMPT):
    """Render ``series`` to SVG, ask ``client`` to describe it, parse five texts."""
    image = render_svg([series]).encode("utf-8")
    try:
        reply = client.submit(image, "image/svg+xml", prompt_text)
    except CaptionerError:
        raise
    except (OSError, TimeoutError) as exc:
        raise CaptionerError(f"captioning provider unreachable: {exc}") from exc
    if not isinstance(reply, str):
        raise CaptionerError(f"captioning provider returned {type(reply).__name__}, expected text")
    return parse_descriptions(reply)
