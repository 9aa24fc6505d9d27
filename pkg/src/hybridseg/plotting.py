"""Tiny static SVG line plots with segment bands (no plotting dependency)."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]


def line_plot_svg(path, series, bands=(), vlines=(), title="", width=800, height=300):
    """Write an SVG with ``series`` = [(x, y, label, dict(style))], shaded ``bands`` = [(x0, x1)]
    and dashed vertical lines at ``vlines``."""
    pad_l, pad_r, pad_t, pad_b = 50, 10, 25, 30
    xs = np.concatenate([np.asarray(s[0], float) for s in series]) if series else np.zeros(1)
    ys = np.concatenate([np.asarray(s[1], float).ravel() for s in series]) if series else np.zeros(1)
    ys = ys[np.isfinite(ys)]
    x0, x1 = float(np.min(xs)), float(np.max(xs))
    y0, y1 = (float(np.min(ys)), float(np.max(ys))) if len(ys) else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    sx = lambda x: pad_l + (x - x0) / (x1 - x0) * (width - pad_l - pad_r)  # noqa: E731
    sy = lambda y: height - pad_b - (y - y0) / (y1 - y0) * (height - pad_t - pad_b)  # noqa: E731
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    for i, (a, b) in enumerate(bands):
        fill = "#eeeeee" if i % 2 == 0 else "#dde8f5"
        out.append(f'<rect x="{sx(a):.1f}" y="{pad_t}" width="{max(sx(b) - sx(a), 0):.1f}" '
                   f'height="{height - pad_t - pad_b}" fill="{fill}"/>')
    for v in vlines:
        out.append(f'<line x1="{sx(v):.1f}" x2="{sx(v):.1f}" y1="{pad_t}" y2="{height - pad_b}" '
                   'stroke="black" stroke-dasharray="4,3"/>')
    out.append(f'<rect x="{pad_l}" y="{pad_t}" width="{width - pad_l - pad_r}" '
               f'height="{height - pad_t - pad_b}" fill="none" stroke="#444"/>')
    for i, (x, y, label, style) in enumerate(series):
        color = style.get("color", PALETTE[i % len(PALETTE)])
        x = np.asarray(x, float)
        y = np.asarray(y, float).ravel()
        ok = np.isfinite(y)
        if style.get("points"):
            for a, b in zip(x[ok], y[ok]):
                out.append(f'<circle cx="{sx(a):.1f}" cy="{sy(b):.1f}" r="2" fill="{color}"/>')
        else:
            pts = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(x[ok], y[ok]))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{pad_l + 8 + 120 * i}" y="{pad_t - 8}" fill="{color}">'
                   f'{escape(label)}</text>')
    out.append(f'<text x="{width - pad_r}" y="{pad_t - 8}" text-anchor="end">{escape(title)}</text>')
    out.append(f'<text x="{pad_l}" y="{height - 10}">{x0:.3g}</text>')
    out.append(f'<text x="{width - pad_r}" y="{height - 10}" text-anchor="end">{x1:.3g}</text>')
    out.append(f'<text x="5" y="{sy(y1) + 4:.1f}">{y1:.3g}</text>')
    out.append(f'<text x="5" y="{sy(y0):.1f}">{y0:.3g}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
