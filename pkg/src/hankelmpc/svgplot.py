"""Minimal native SVG line charts (no plotting runtime required)."""

import math
from pathlib import Path

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

WIDTH, HEIGHT = 640, 360
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 20, 34, 42


def _finite(values):
    return [v for v in values if math.isfinite(v)]


def _ticks(lo: float, hi: float, count: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / max(count - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for step in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= step * mag:
            raw = step * mag
            break
    start = math.ceil(lo / raw) * raw
    ticks = []
    t = start
    while t <= hi + 1e-12 * span:
        ticks.append(t)
        t += raw
    return ticks


def line_chart(path, x, series, labels, title: str = "", xlabel: str = "t",
               ylabel: str = "", hlines=()) -> None:
    """Write a polyline chart; series is a list of y-vectors over x.

    hlines is a list of (value, label) pairs drawn as dashed reference lines
    (setpoints).
    """
    x = [float(v) for v in x]
    series = [[float(v) for v in s] for s in series]
    ys = [v for s in series for v in _finite(s)] + [v for v, _ in hlines]
    if not x or not ys:
        Path(path).write_text("<svg xmlns='http://www.w3.org/2000/svg'/>\n")
        return
    x_lo, x_hi = min(x), max(x)
    y_lo, y_hi = min(ys), max(ys)
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = 0.06 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(v):
        return MARGIN_L + (v - x_lo) / (x_hi - x_lo or 1.0) * plot_w

    def sy(v):
        return MARGIN_T + (y_hi - v) / (y_hi - y_lo) * plot_h

    parts = [
        f"<svg xmlns='http://www.w3.org/2000/svg' width='{WIDTH}' height='{HEIGHT}' "
        f"viewBox='0 0 {WIDTH} {HEIGHT}' font-family='sans-serif' font-size='12'>",
        f"<rect width='{WIDTH}' height='{HEIGHT}' fill='white'/>",
        f"<rect x='{MARGIN_L}' y='{MARGIN_T}' width='{plot_w}' height='{plot_h}' "
        "fill='none' stroke='#333'/>",
    ]
    if title:
        parts.append(f"<text x='{WIDTH / 2:.1f}' y='20' text-anchor='middle' "
                     f"font-size='14'>{title}</text>")

    for t in _ticks(x_lo, x_hi):
        px = sx(t)
        parts.append(f"<line x1='{px:.1f}' y1='{MARGIN_T + plot_h}' x2='{px:.1f}' "
                     f"y2='{MARGIN_T + plot_h + 4}' stroke='#333'/>")
        parts.append(f"<text x='{px:.1f}' y='{MARGIN_T + plot_h + 16}' "
                     f"text-anchor='middle'>{t:g}</text>")
    for t in _ticks(y_lo, y_hi):
        py = sy(t)
        parts.append(f"<line x1='{MARGIN_L - 4}' y1='{py:.1f}' x2='{MARGIN_L}' "
                     f"y2='{py:.1f}' stroke='#333'/>")
        parts.append(f"<text x='{MARGIN_L - 7}' y='{py + 4:.1f}' "
                     f"text-anchor='end'>{t:.4g}</text>")
        parts.append(f"<line x1='{MARGIN_L}' y1='{py:.1f}' x2='{MARGIN_L + plot_w}' "
                     f"y2='{py:.1f}' stroke='#eee'/>")

    parts.append(f"<text x='{MARGIN_L + plot_w / 2:.1f}' y='{HEIGHT - 8}' "
                 f"text-anchor='middle'>{xlabel}</text>")
    if ylabel:
        parts.append(f"<text x='16' y='{MARGIN_T + plot_h / 2:.1f}' text-anchor='middle' "
                     f"transform='rotate(-90 16 {MARGIN_T + plot_h / 2:.1f})'>{ylabel}</text>")

    for value, label in hlines:
        py = sy(value)
        parts.append(f"<line x1='{MARGIN_L}' y1='{py:.1f}' x2='{MARGIN_L + plot_w}' "
                     f"y2='{py:.1f}' stroke='#888' stroke-dasharray='6 4'/>")
        if label:
            parts.append(f"<text x='{MARGIN_L + plot_w - 4}' y='{py - 4:.1f}' "
                         f"text-anchor='end' fill='#888'>{label}</text>")

    for idx, (s, label) in enumerate(zip(series, labels)):
        color = PALETTE[idx % len(PALETTE)]
        pts = " ".join(f"{sx(px):.2f},{sy(py):.2f}" for px, py in zip(x, s)
                       if math.isfinite(py))
        parts.append(f"<polyline points='{pts}' fill='none' stroke='{color}' "
                     "stroke-width='1.6'/>")
        parts.append(f"<text x='{MARGIN_L + 8 + 90 * idx}' y='{MARGIN_T - 8}' "
                     f"fill='{color}'>{label}</text>")

    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
