"""Deterministic SVG line charts (fixed 800 x 600 viewport)."""

from __future__ import annotations

import numpy as np

WIDTH, HEIGHT = 800, 600
LEFT, RIGHT, TOP, BOTTOM = 80, 160, 30, 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f")
TICKS = 5


def _num(x) -> str:
    return f"{x:.2f}"


def _label(x) -> str:
    return f"{x:.4g}"


def _range(a):
    lo, hi = float(np.min(a)), float(np.max(a))
    if not hi > lo:
        pad = max(abs(lo), 1.0) * 0.5
        lo, hi = lo - pad, hi + pad
    return lo, hi


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def line_chart(x, series: dict, xlabel: str = "t") -> str:
    """One polyline per ``{name: values}`` entry against ``x``; returns the SVG text."""
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    x0, x1 = _range(x)
    y0, y1 = _range(np.concatenate([v for v in ys.values()])) if ys else (0.0, 1.0)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return TOP + (y1 - v) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<g stroke="black" stroke-width="1" fill="none">'
        f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}"/>'
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}"/></g>',
        '<g font-family="sans-serif" font-size="12" fill="black">',
    ]
    for i in range(TICKS + 1):
        xv = x0 + (x1 - x0) * i / TICKS
        yv = y0 + (y1 - y0) * i / TICKS
        out.append(f'<text x="{_num(sx(xv))}" y="{TOP + ph + 18}" text-anchor="middle">{_label(xv)}</text>')
        out.append(f'<text x="{LEFT - 6}" y="{_num(sy(yv) + 4)}" text-anchor="end">{_label(yv)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 15}" text-anchor="middle">{_escape(xlabel)}</text>')
    out.append("</g>")
    for j, (name, y) in enumerate(ys.items()):
        color = COLORS[j % len(COLORS)]
        pts = " ".join(f"{_num(sx(a))},{_num(sy(b))}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = TOP + 20 * j + 10
        out.append(
            f'<line x1="{LEFT + pw + 15}" y1="{ly}" x2="{LEFT + pw + 40}" y2="{ly}" stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{LEFT + pw + 45}" y="{ly + 4}" font-family="sans-serif" font-size="12">{_escape(name)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
