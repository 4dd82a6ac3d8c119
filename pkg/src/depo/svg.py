"""Minimal self-contained SVG line plots with confidence bands.

Pure function of the input series: same data, same bytes. Only needs the
standard library; floats are formatted to fixed precision so output is
platform-stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .errors import ConfigurationError

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 62, 16, 34, 46
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#17becf", "#7f7f7f"]


@dataclass
class Series:
    label: str
    x: list[float]
    mean: list[float]
    lo: list[float] = field(default_factory=list)
    hi: list[float] = field(default_factory=list)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def _tick_label(v: float) -> str:
    a = abs(v)
    if a >= 100000 or (0 < a < 0.01):
        return f"{v:.1e}"
    if a >= 100:
        return f"{v:.0f}"
    return f"{v:.3g}"


def render_curves(series: Sequence[Series], title: str, x_label: str,
                  y_label: str, j_star: float | None = None) -> str:
    """Render mean curves with optional shaded bands; returns SVG text."""
    if not series:
        raise ConfigurationError("nothing to plot: no series given")
    for s in series:
        if not s.x or len(s.x) != len(s.mean):
            raise ConfigurationError(
                f"series '{s.label}' has empty or mismatched data")
    xs = [v for s in series for v in s.x]
    ys = [v for s in series for v in s.mean]
    ys += [v for s in series for v in s.lo]
    ys += [v for s in series for v in s.hi]
    if j_star is not None:
        ys.append(j_star)
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    pad = 0.06 * (y_hi - y_lo) or 1.0
    y_lo, y_hi = y_lo - pad, y_hi + pad
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(x: float) -> float:
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        f'<text x="{WIDTH / 2:.0f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{_esc(title)}</text>',
    ]
    for tx in _ticks(x_lo, x_hi):
        x = px(tx)
        out.append(f'<line x1="{_fmt(x)}" y1="{MARGIN_T}" x2="{_fmt(x)}" '
                   f'y2="{HEIGHT - MARGIN_B}" stroke="#e0e0e0" stroke-width="1"/>')
        out.append(f'<text x="{_fmt(x)}" y="{HEIGHT - MARGIN_B + 16}" '
                   f'text-anchor="middle" font-family="sans-serif" '
                   f'font-size="10">{_tick_label(tx)}</text>')
    for ty in _ticks(y_lo, y_hi):
        y = py(ty)
        out.append(f'<line x1="{MARGIN_L}" y1="{_fmt(y)}" '
                   f'x2="{WIDTH - MARGIN_R}" y2="{_fmt(y)}" '
                   f'stroke="#e0e0e0" stroke-width="1"/>')
        out.append(f'<text x="{MARGIN_L - 6}" y="{_fmt(y + 3)}" '
                   f'text-anchor="end" font-family="sans-serif" '
                   f'font-size="10">{_tick_label(ty)}</text>')
    out.append(f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" '
               f'height="{plot_h}" fill="none" stroke="#808080"/>')
    out.append(f'<text x="{MARGIN_L + plot_w / 2:.0f}" y="{HEIGHT - 10}" '
               f'text-anchor="middle" font-family="sans-serif" '
               f'font-size="12">{_esc(x_label)}</text>')
    out.append(f'<text x="16" y="{MARGIN_T + plot_h / 2:.0f}" '
               f'text-anchor="middle" font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 16 {MARGIN_T + plot_h / 2:.0f})">'
               f'{_esc(y_label)}</text>')
    if j_star is not None:
        y = py(j_star)
        out.append(f'<line x1="{MARGIN_L}" y1="{_fmt(y)}" '
                   f'x2="{WIDTH - MARGIN_R}" y2="{_fmt(y)}" stroke="#404040" '
                   f'stroke-width="1" stroke-dasharray="6,4"/>')
        out.append(f'<text x="{WIDTH - MARGIN_R - 4}" y="{_fmt(y - 4)}" '
                   f'text-anchor="end" font-family="sans-serif" '
                   f'font-size="10">j*</text>')
    for k, s in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        if s.lo and s.hi and len(s.lo) == len(s.x) == len(s.hi):
            upper = [f"{_fmt(px(x))},{_fmt(py(y))}"
                     for x, y in zip(s.x, s.hi)]
            lower = [f"{_fmt(px(x))},{_fmt(py(y))}"
                     for x, y in zip(reversed(s.x), reversed(s.lo))]
            out.append(f'<polygon points="{" ".join(upper + lower)}" '
                       f'fill="{color}" fill-opacity="0.15" stroke="none"/>')
        pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}"
                       for x, y in zip(s.x, s.mean))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="1.6"/>')
        ly = MARGIN_T + 14 + 16 * k
        lx = MARGIN_L + 10
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 28}" y="{ly}" font-family="sans-serif" '
                   f'font-size="11">{_esc(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;"))
