"""Minimal standalone SVG charts with the plotted data embedded as a comment."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np
import pandas as pd

W, H = 720, 360
PAD_L, PAD_R, PAD_T, PAD_B = 64, 140, 36, 44
COLORS = ("#1f4e79", "#c0392b", "#27ae60", "#8e44ad", "#d68910", "#2c3e50", "#16a085", "#7f8c8d")


def _fmt(v):
    return f"{v:.6g}"


def _data_comment(frame: pd.DataFrame) -> str:
    text = frame.to_csv(float_format="%.10g", lineterminator="\n")
    return "<!-- data\n" + text.replace("--", "- -") + "-->\n"


def _scale(lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (np.asarray(v, dtype=float) - lo) / span * (b - a)


def _frame(title, xlabels, ylo, yhi, sy):
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<line x1="{PAD_L}" y1="{H - PAD_B}" x2="{W - PAD_R}" y2="{H - PAD_B}" stroke="black"/>',
        f'<line x1="{PAD_L}" y1="{PAD_T}" x2="{PAD_L}" y2="{H - PAD_B}" stroke="black"/>',
    ]
    for v in np.linspace(ylo, yhi, 5):
        y = float(sy(v))
        out.append(f'<text x="{PAD_L - 6}" y="{y + 4:.1f}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="10">{_fmt(v)}</text>')
    for x, label in xlabels:
        out.append(f'<text x="{x:.1f}" y="{H - PAD_B + 16}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="10">{escape(str(label))}</text>')
    return out


def _legend(names):
    out = []
    for i, name in enumerate(names):
        y = PAD_T + 14 * i
        c = COLORS[i % len(COLORS)]
        out.append(f'<rect x="{W - PAD_R + 10}" y="{y}" width="10" height="10" fill="{c}"/>')
        out.append(f'<text x="{W - PAD_R + 24}" y="{y + 9}" font-family="sans-serif" font-size="10">'
                   f'{escape(str(name))}</text>')
    return out


def line_chart(path, frame: pd.DataFrame, title, shade=()):
    """Lines for every column of ``frame`` against its index; ``shade`` holds (start, end) x-intervals."""
    frame = pd.DataFrame(frame)
    x = np.arange(len(frame)) if not isinstance(frame.index, pd.DatetimeIndex) else (
        frame.index.year + (frame.index.month - 1) / 12.0).to_numpy(dtype=float)
    vals = frame.to_numpy(dtype=float)
    finite = vals[np.isfinite(vals)]
    ylo, yhi = (finite.min(), finite.max()) if finite.size else (0.0, 1.0)
    if ylo == yhi:
        ylo, yhi = ylo - 1.0, yhi + 1.0
    sx = _scale(x.min(), x.max(), PAD_L, W - PAD_R) if len(x) else _scale(0, 1, PAD_L, W - PAD_R)
    sy = _scale(ylo, yhi, H - PAD_B, PAD_T)
    ticks = np.linspace(x.min(), x.max(), 6) if len(x) else []
    labels = [(float(sx(t)), f"{t:.0f}" if isinstance(frame.index, pd.DatetimeIndex) else f"{t:.0f}") for t in ticks]
    out = _frame(title, labels, ylo, yhi, sy)
    for a, b in shade:
        xa, xb = float(sx(a)), float(sx(b))
        out.append(f'<rect x="{xa:.1f}" y="{PAD_T}" width="{max(xb - xa, 0.5):.1f}" height="{H - PAD_T - PAD_B}" '
                   f'fill="#cccccc" fill-opacity="0.5"/>')
    for j, col in enumerate(frame.columns):
        ok = np.isfinite(vals[:, j])
        pts = " ".join(f"{px:.2f},{py:.2f}" for px, py in zip(sx(x[ok]), sy(vals[ok, j])))
        out.append(f'<polyline fill="none" stroke="{COLORS[j % len(COLORS)]}" stroke-width="1.2" points="{pts}"/>')
    out += _legend(frame.columns)
    out.append("</svg>")
    Path(path).write_text(_data_comment(frame) + "\n".join(out) + "\n")


def bar_chart(path, frame: pd.DataFrame, title):
    """Grouped bars: one group per row, one bar per column."""
    frame = pd.DataFrame(frame)
    vals = frame.to_numpy(dtype=float)
    ylo, yhi = min(0.0, np.nanmin(vals)), max(0.0, np.nanmax(vals))
    if ylo == yhi:
        yhi = 1.0
    sy = _scale(ylo, yhi, H - PAD_B, PAD_T)
    n_groups, n_bars = vals.shape
    gw = (W - PAD_L - PAD_R) / max(n_groups, 1)
    bw = gw * 0.8 / max(n_bars, 1)
    labels = [(PAD_L + gw * (i + 0.5), frame.index[i]) for i in range(n_groups)]
    out = _frame(title, labels, ylo, yhi, sy)
    zero = float(sy(0.0))
    for i in range(n_groups):
        for j in range(n_bars):
            v = vals[i, j]
            if not np.isfinite(v):
                continue
            y = float(sy(v))
            x0 = PAD_L + gw * i + gw * 0.1 + bw * j
            out.append(f'<rect x="{x0:.2f}" y="{min(y, zero):.2f}" width="{bw:.2f}" height="{abs(zero - y):.2f}" '
                       f'fill="{COLORS[j % len(COLORS)]}"/>')
    out += _legend(frame.columns)
    out.append("</svg>")
    Path(path).write_text(_data_comment(frame) + "\n".join(out) + "\n")
