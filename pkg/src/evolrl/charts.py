"""Static SVG line charts for simulation series. No plotting dependency."""

from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

PANEL_W = 640
PANEL_H = 180
MARGIN_L = 64
MARGIN_R = 16
MARGIN_T = 28
MARGIN_B = 28
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")

DEFAULT_PANELS = (
    ("pass1", "Pass@1"),
    ("mean_length", "Mean response length"),
    ("entropy_nats", "Policy entropy (nats)"),
)


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _bounds(values: Sequence[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if hi - lo < 1e-12:
        pad = abs(hi) * 0.05 or 0.5
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


def _panel(top: float, title: str, series: Mapping[str, tuple[Sequence[float], Sequence[float]]]) -> list[str]:
    xs_all = [x for xs, _ in series.values() for x in xs]
    ys_all = [y for _, ys in series.values() for y in ys]
    out = [f'<text x="{MARGIN_L}" y="{_fmt(top + 18)}" font-size="13" font-weight="bold">{escape(title)}</text>']
    x0, x1 = MARGIN_L, PANEL_W - MARGIN_R
    y0, y1 = top + MARGIN_T, top + PANEL_H - MARGIN_B
    out.append(f'<rect x="{x0}" y="{_fmt(y0)}" width="{x1 - x0}" height="{_fmt(y1 - y0)}" '
               'fill="none" stroke="#999" stroke-width="1"/>')
    if not xs_all:
        return out
    xlo, xhi = min(xs_all), max(xs_all)
    if xhi == xlo:
        xhi = xlo + 1
    ylo, yhi = _bounds(ys_all)

    def px(x):
        return x0 + (x - xlo) / (xhi - xlo) * (x1 - x0)

    def py(y):
        return y1 - (y - ylo) / (yhi - ylo) * (y1 - y0)

    for label, yv in ((f"{yhi:.3g}", yhi), (f"{ylo:.3g}", ylo)):
        out.append(f'<text x="{x0 - 6}" y="{_fmt(py(yv) + 4)}" font-size="10" text-anchor="end">{label}</text>')
    out.append(f'<text x="{x0}" y="{_fmt(y1 + 14)}" font-size="10">{xlo:g}</text>')
    out.append(f'<text x="{x1}" y="{_fmt(y1 + 14)}" font-size="10" text-anchor="end">{xhi:g}</text>')
    for n, (name, (xs, ys)) in enumerate(series.items()):
        color = COLORS[n % len(COLORS)]
        pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{x1 - 4}" y="{_fmt(y0 + 14 + 12 * n)}" font-size="10" text-anchor="end" '
                   f'fill="{color}">{escape(name)}</text>')
    return out


def render_series_svg(runs: Mapping[str, Sequence[Mapping[str, float]]],
                      panels: Sequence[tuple[str, str]] = DEFAULT_PANELS) -> str:
    """Stack one panel per metric; each run in ``runs`` is one line per panel.

    ``runs`` maps a legend label to rows that carry a ``step`` key.
    """
    height = PANEL_H * len(panels)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W}" height="{height}" '
             f'viewBox="0 0 {PANEL_W} {height}" font-family="sans-serif">',
             '<rect width="100%" height="100%" fill="white"/>']
    for i, (key, title) in enumerate(panels):
        series = {label: ([row["step"] for row in rows], [row[key] for row in rows]) for label, rows in runs.items()}
        parts.extend(_panel(i * PANEL_H, title, series))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
