"""Minimal self-contained SVG learning-curve figures.

Hand-rolled so experiment reports need no plotting dependency.  Each
series is a log-log polyline over (episodes, value) points; nonpositive
values are clipped to a tiny floor so regrets near zero stay drawable.
"""

from __future__ import annotations

import math
from pathlib import Path

PANEL_W, PANEL_H = 360, 280
MARGIN = 56
VALUE_FLOOR = 1e-12

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _log_ticks(lo, hi):
    first = math.floor(math.log10(lo))
    last = math.ceil(math.log10(hi))
    return [10.0**e for e in range(first, last + 1)]


def _panel(origin_x, title, series):
    xs = [x for x, _ in series]
    ys = [max(y, VALUE_FLOOR) for _, y in series]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_lo == x_hi:
        x_lo, x_hi = x_lo / 2, x_hi * 2
    if y_lo == y_hi:
        y_lo, y_hi = y_lo / 2, y_hi * 2

    def sx(x):
        t = (math.log10(x) - math.log10(x_lo)) / (math.log10(x_hi) - math.log10(x_lo))
        return origin_x + MARGIN + t * (PANEL_W - 2 * MARGIN)

    def sy(y):
        t = (math.log10(y) - math.log10(y_lo)) / (math.log10(y_hi) - math.log10(y_lo))
        return PANEL_H - MARGIN - t * (PANEL_H - 2 * MARGIN)

    parts = [
        f'<rect x="{origin_x + MARGIN}" y="{MARGIN}" '
        f'width="{PANEL_W - 2 * MARGIN}" height="{PANEL_H - 2 * MARGIN}" '
        f'fill="none" stroke="#333" stroke-width="1"/>',
        f'<text x="{origin_x + PANEL_W / 2:.1f}" y="{MARGIN - 12}" '
        f'text-anchor="middle" font-size="13">{title}</text>',
        f'<text x="{origin_x + PANEL_W / 2:.1f}" y="{PANEL_H - 10}" '
        f'text-anchor="middle" font-size="11">episodes N (log)</text>',
    ]
    for tick in _log_ticks(x_lo, x_hi):
        if x_lo <= tick <= x_hi:
            parts.append(
                f'<line x1="{sx(tick):.1f}" y1="{PANEL_H - MARGIN}" '
                f'x2="{sx(tick):.1f}" y2="{PANEL_H - MARGIN + 4}" stroke="#333"/>')
            parts.append(
                f'<text x="{sx(tick):.1f}" y="{PANEL_H - MARGIN + 16}" '
                f'text-anchor="middle" font-size="9">1e{int(math.log10(tick))}</text>')
    for tick in _log_ticks(y_lo, y_hi):
        if y_lo <= tick <= y_hi:
            parts.append(
                f'<line x1="{origin_x + MARGIN - 4}" y1="{sy(tick):.1f}" '
                f'x2="{origin_x + MARGIN}" y2="{sy(tick):.1f}" stroke="#333"/>')
            parts.append(
                f'<text x="{origin_x + MARGIN - 6}" y="{sy(tick):.1f}" '
                f'text-anchor="end" font-size="9">1e{int(math.log10(tick))}</text>')
    pts = " ".join(f"{sx(x):.2f},{sy(max(y, VALUE_FLOOR)):.2f}" for x, y in series)
    parts.append(f'<polyline points="{pts}" fill="none" '
                 f'stroke="{_COLORS[0]}" stroke-width="1.5"/>')
    for x, y in series:
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(max(y, VALUE_FLOOR)):.2f}" '
                     f'r="2.5" fill="{_COLORS[0]}"/>')
    return parts


def write_learning_curves(path, curves: dict) -> None:
    """Write a two-panel log-log SVG; ``curves`` maps a panel title to a
    list of (episodes, value) points."""
    panels = [(title, series) for title, series in curves.items() if series]
    width = max(1, len(panels)) * PANEL_W
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{PANEL_H}" viewBox="0 0 {width} {PANEL_H}">',
        f'<rect width="{width}" height="{PANEL_H}" fill="white"/>',
    ]
    for i, (title, series) in enumerate(panels):
        parts.extend(_panel(i * PANEL_W, title, series))
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
