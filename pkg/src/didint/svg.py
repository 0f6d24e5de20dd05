"""Minimal static SVG line charts (no scripts, deterministic text)."""
from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1b6ca8", "#d1495b", "#66a182", "#edae49", "#6b4c9a", "#2e4057", "#8d96a3", "#00798c")

WIDTH, HEIGHT = 640, 400
MARGIN = {"left": 70, "right": 150, "top": 40, "bottom": 50}


def _num(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def line_chart(
    series: Mapping[str, tuple[Sequence[float], Sequence[float]]],
    rules: Sequence[float] = (),
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
) -> str:
    """Render one polyline per series, vertical rules and a legend.

    Parameters
    ----------
    series : mapping
        Name to ``(xs, ys)``. Series are drawn in mapping order.
    rules : sequence of float
        x positions of vertical rules (duplicates are drawn once).

    Returns
    -------
    str
        A complete SVG document.
    """
    xs_all = [float(x) for xs, _ in series.values() for x in xs] + [float(r) for r in rules]
    ys_all = [float(y) for _, ys in series.values() for y in ys]
    if not xs_all:
        xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
    if not ys_all:
        ys_all = [0.0, 1.0]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    pad = 0.05 * (y1 - y0) if y1 > y0 else 1.0
    y0, y1 = y0 - pad, y1 + pad
    left, top = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return left + (float(x) - x0) / (x1 - x0) * pw

    def py(y):
        return top + (y1 - float(y)) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line class="axis" x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line class="axis" x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(
            f'<text x="{_num(px(t))}" y="{top + ph + 16}" text-anchor="middle">{t:g}</text>'
        )
    for t in _ticks(y0, y1):
        out.append(f'<text x="{left - 6}" y="{_num(py(t) + 4)}" text-anchor="end">{t:.3g}</text>')
    out.append(
        f'<text x="{left + pw / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>'
    )
    out.append(
        f'<text x="16" y="{top + ph / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2:.0f})">{escape(ylabel)}</text>'
    )
    for r in sorted(set(float(r) for r in rules)):
        out.append(
            f'<line class="rule" x1="{_num(px(r))}" y1="{top}" x2="{_num(px(r))}" y2="{top + ph}" '
            'stroke="gray" stroke-dasharray="4 3"/>'
        )
    for i, (name, (xs, ys)) in enumerate(series.items()):
        colour = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_num(px(x))},{_num(py(y))}" for x, y in zip(xs, ys))
        out.append(
            f'<polyline data-series="{escape(str(name))}" points="{pts}" fill="none" '
            f'stroke="{colour}" stroke-width="1.5"/>'
        )
        ly = top + 14 + 16 * i
        lx = left + pw + 14
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}">{escape(str(name))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
