"""Minimal deterministic SVG figures (line plots, scatters, heatmaps).

Output depends only on the data: fixed canvas, fixed number formatting, no
timestamps or external references.
"""
from __future__ import annotations

import numpy as np

W, H = 480, 360
MARGIN = 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _n(v: float) -> str:
    return format(float(v), ".6g")


def _range(a):
    a = np.asarray(a, dtype=float)
    a = a[np.isfinite(a)]
    if a.size == 0:
        return 0.0, 1.0
    lo, hi = float(a.min()), float(a.max())
    if hi == lo:
        pad = 1.0 if lo == 0 else 0.05 * abs(lo)
        return lo - pad, hi + pad
    return lo, hi


def _frame(title, xlabel, ylabel, xr, yr):
    x0, x1 = MARGIN, W - MARGIN // 2
    y0, y1 = H - MARGIN, MARGIN // 2
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W // 2}" y="16" text-anchor="middle" font-size="13" font-family="sans-serif">{title}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) // 2}" y="{H - 12}" text-anchor="middle" font-size="11" font-family="sans-serif">{xlabel}</text>',
        f'<text x="14" y="{(y0 + y1) // 2}" text-anchor="middle" font-size="11" font-family="sans-serif" '
        f'transform="rotate(-90 14 {(y0 + y1) // 2})">{ylabel}</text>',
        f'<text x="{x0}" y="{y0 + 14}" font-size="9" font-family="sans-serif">{_n(xr[0])}</text>',
        f'<text x="{x1}" y="{y0 + 14}" text-anchor="end" font-size="9" font-family="sans-serif">{_n(xr[1])}</text>',
        f'<text x="{x0 - 4}" y="{y0}" text-anchor="end" font-size="9" font-family="sans-serif">{_n(yr[0])}</text>',
        f'<text x="{x0 - 4}" y="{y1 + 8}" text-anchor="end" font-size="9" font-family="sans-serif">{_n(yr[1])}</text>',
    ]

    def sx(v):
        return x0 + (v - xr[0]) / (xr[1] - xr[0]) * (x1 - x0)

    def sy(v):
        return y0 - (v - yr[0]) / (yr[1] - yr[0]) * (y0 - y1)

    return parts, sx, sy


def line_plot(series, title="", xlabel="", ylabel="") -> str:
    """``series`` is a list of ``(x, y)`` array pairs."""
    xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in series])
    ys = np.concatenate([np.asarray(y, dtype=float) for _, y in series])
    parts, sx, sy = _frame(title, xlabel, ylabel, _range(xs), _range(ys))
    for k, (x, y) in enumerate(series):
        pts = " ".join(f"{_n(sx(a))},{_n(sy(b))}" for a, b in zip(x, y) if np.isfinite(a) and np.isfinite(b))
        parts.append(f'<polyline fill="none" stroke="{PALETTE[k % len(PALETTE)]}" stroke-width="1.2" points="{pts}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def scatter(x, y, title="", xlabel="", ylabel="", diagonal=True) -> str:
    x, y = np.ravel(np.asarray(x, dtype=float)), np.ravel(np.asarray(y, dtype=float))
    r = _range(np.concatenate([x, y]))
    parts, sx, sy = _frame(title, xlabel, ylabel, r, r)
    if diagonal:
        parts.append(f'<line x1="{_n(sx(r[0]))}" y1="{_n(sy(r[0]))}" x2="{_n(sx(r[1]))}" y2="{_n(sy(r[1]))}" '
                     f'stroke="#999999" stroke-dasharray="4 3"/>')
    for a, b in zip(x, y):
        if np.isfinite(a) and np.isfinite(b):
            parts.append(f'<circle cx="{_n(sx(a))}" cy="{_n(sy(b))}" r="2" fill="{PALETTE[0]}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _diverging(t: float) -> str:
    # t in [-1, 1]: blue through white to red
    t = max(-1.0, min(1.0, t))
    if t >= 0:
        r, g, b = 255, int(round(255 * (1 - t))), int(round(255 * (1 - t)))
    else:
        r, g, b = int(round(255 * (1 + t))), int(round(255 * (1 + t))), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(field, extent, title="", xlabel="x0", ylabel="x1", max_cells: int = 80) -> str:
    """2-D field on ``extent = (xmin, xmax, ymin, ymax)``, block-averaged to at
    most ``max_cells`` per side; colour scale symmetric about zero."""
    F = np.asarray(field, dtype=float)
    fx = max(1, int(np.ceil(F.shape[0] / max_cells)))
    fy = max(1, int(np.ceil(F.shape[1] / max_cells)))
    nx, ny = F.shape[0] // fx, F.shape[1] // fy
    F = F[: nx * fx, : ny * fy].reshape(nx, fx, ny, fy).mean(axis=(1, 3))
    scale = float(np.max(np.abs(F))) or 1.0
    parts, sx, sy = _frame(title, xlabel, ylabel, extent[:2], extent[2:])
    dx = (extent[1] - extent[0]) / nx
    dy = (extent[3] - extent[2]) / ny
    wpx = sx(extent[0] + dx) - sx(extent[0])
    hpx = sy(extent[2]) - sy(extent[2] + dy)
    for j in range(nx):
        for k in range(ny):
            x = sx(extent[0] + j * dx)
            y = sy(extent[2] + (k + 1) * dy)
            parts.append(f'<rect x="{_n(x)}" y="{_n(y)}" width="{_n(wpx)}" height="{_n(hpx)}" '
                         f'fill="{_diverging(F[j, k] / scale)}"/>')
    parts.append(f'<text x="{W - 4}" y="16" text-anchor="end" font-size="9" font-family="sans-serif">'
                 f'|max| {_n(scale)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
