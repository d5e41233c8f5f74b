"""Hand-written SVG line charts of per-epoch run logs.

Top panel: validation ``acc`` and ``acc_<m>``. Bottom panel: ``d_<m>``,
drawn only when the log contains probe values.
"""
import csv
from xml.sax.saxutils import escape

from ..errors import ConfigError

WIDTH, PANEL_H, MARGIN = 640, 260, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")
REQUIRED = ("epoch", "split", "acc")


def read_series(path):
    """``(epochs, acc_series, d_series)`` from the val rows of a run CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        rows = [r for r in reader if r.get("split") == "val"]
    missing = [c for c in REQUIRED if c not in cols]
    if missing:
        raise ConfigError(f"{path}: missing column(s) {missing}")
    if not rows:
        raise ConfigError(f"{path}: no validation rows to plot")
    epochs = [int(r["epoch"]) for r in rows]
    acc = {c: [float(r[c]) for r in rows] for c in cols if c == "acc" or c.startswith("acc_")}
    d = {}
    for c in cols:
        if c.startswith("d_"):
            pts = [(e, float(r[c])) for e, r in zip(epochs, rows) if r[c] != ""]
            if pts:
                d[c] = pts
    return epochs, acc, d


def _panel(top, title, series, x_range):
    """SVG fragment for one panel; ``series`` maps label -> [(x, y)]."""
    x0, x1 = x_range
    ys = [y for pts in series.values() for _, y in pts]
    y0, y1 = min(ys + [0.0]), max(ys + [1.0])
    pw, ph = WIDTH - 2 * MARGIN, PANEL_H - 2 * MARGIN

    def sx(x):
        return MARGIN + (x - x0) / ((x1 - x0) or 1) * pw

    def sy(y):
        return top + MARGIN + ph - (y - y0) / ((y1 - y0) or 1) * ph

    out = [f'<text x="{WIDTH / 2:.1f}" y="{top + 20}" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{MARGIN}" y="{top + MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for i in range(5):
        v = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{MARGIN - 6}" y="{sy(v) + 4:.1f}" text-anchor="end" font-size="10">{v:.2f}</text>')
    for x in sorted({x0, x1, (x0 + x1) // 2}):
        out.append(f'<text x="{sx(x):.1f}" y="{top + MARGIN + ph + 14}" text-anchor="middle" '
                   f'font-size="10">{x}</text>')
    out.append(f'<text x="{WIDTH / 2:.1f}" y="{top + PANEL_H - 8}" text-anchor="middle" font-size="11">epoch</text>')
    for i, (label, pts) in enumerate(series.items()):
        color = COLORS[i % len(COLORS)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        out.append(f'<polyline data-series="{escape(label)}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5" points="{coords}"/>')
        ly = top + MARGIN + 12 + 14 * i
        out.append(f'<line x1="{WIDTH - MARGIN - 90}" y1="{ly - 4}" x2="{WIDTH - MARGIN - 75}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{WIDTH - MARGIN - 70}" y="{ly}" font-size="10">{escape(label)}</text>')
    return out


def render(path):
    epochs, acc, d = read_series(path)
    x_range = (min(epochs), max(epochs))
    panels = [("accuracy (validation)", {k: list(zip(epochs, v)) for k, v in acc.items()})]
    if d:
        panels.append(("competition strength d", d))
    height = PANEL_H * len(panels)
    parts = ['<?xml version="1.0" encoding="UTF-8"?>',
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
             f'viewBox="0 0 {WIDTH} {height}">',
             f'<rect width="{WIDTH}" height="{height}" fill="white"/>']
    for i, (title, series) in enumerate(panels):
        parts += _panel(i * PANEL_H, title, series, x_range)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
