"""Minimal static SVG line plots (polylines, axes, ticks, legend)."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#4878A8", "#E57A5A", "#5A9E5A", "#8B6BB8", "#D69A2E")
DASHES = ("", "6,4", "2,3", "8,3,2,3", "")

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 50


def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(v) for v in np.arange(start, hi + 0.5 * step, step) if lo - 1e-12 <= v <= hi + 1e-12]


def _fmt(v):
    return f"{v:.4g}"


def line_plot(path, lines, title="", xlabel="", ylabel=""):
    """Write an SVG with one polyline per ``(label, xs, ys)`` entry.

    Non-finite points are dropped. Output depends only on the inputs.
    """
    xs_all = np.concatenate([np.asarray(x, float) for _, x, _ in lines]) if lines else np.array([0.0])
    ys_all = np.concatenate([np.asarray(y, float) for _, _, y in lines]) if lines else np.array([0.0])
    fin = np.isfinite(xs_all) & np.isfinite(ys_all)
    xs_all, ys_all = (xs_all[fin], ys_all[fin]) if fin.any() else (np.array([0.0]), np.array([0.0]))
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = float(ys_all.min()), float(ys_all.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        pad = abs(y0) * 0.05 or 1.0
        y0, y1 = y0 - pad, y1 + pad
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def py(y):
        return TOP + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>']
    for tx in _ticks(x0, x1):
        X = px(tx)
        out.append(f'<line x1="{X:.2f}" y1="{TOP + ph}" x2="{X:.2f}" y2="{TOP + ph + 5}" stroke="#333"/>')
        out.append(f'<text x="{X:.2f}" y="{TOP + ph + 18}" text-anchor="middle">{_fmt(tx)}</text>')
    for ty in _ticks(y0, y1):
        Y = py(ty)
        out.append(f'<line x1="{LEFT - 5}" y1="{Y:.2f}" x2="{LEFT}" y2="{Y:.2f}" stroke="#333"/>')
        out.append(f'<line x1="{LEFT}" y1="{Y:.2f}" x2="{LEFT + pw}" y2="{Y:.2f}" stroke="#eee"/>')
        out.append(f'<text x="{LEFT - 8}" y="{Y + 4:.2f}" text-anchor="end">{_fmt(ty)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>')
    for k, (label, xs, ys) in enumerate(lines):
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        keep = np.isfinite(xs) & np.isfinite(ys)
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs[keep], ys[keep]))
        color = PALETTE[k % len(PALETTE)]
        dash = DASHES[k % len(DASHES)]
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.6"{dash_attr} points="{pts}"/>')
        ly = TOP + 14 + 16 * k
        out.append(f'<line x1="{LEFT + pw - 150}" y1="{ly - 4}" x2="{LEFT + pw - 124}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="1.6"{dash_attr}/>')
        out.append(f'<text x="{LEFT + pw - 118}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
