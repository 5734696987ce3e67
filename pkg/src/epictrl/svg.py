"""Minimal self-contained SVG line charts."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .errors import DataError

WIDTH, HEIGHT = 640, 360
MARGIN = dict(left=70, right=20, top=36, bottom=44)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n)


def line_chart(x, series: dict, title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    """Render ``series`` (CSV column name -> values) against ``x``.

    Each polyline carries a ``data-column`` attribute naming its source column.
    """
    x = np.asarray(x, dtype=float)
    if not series:
        raise DataError("nothing to plot")
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    if any(v.shape != x.shape for v in ys.values()):
        raise DataError("every series must match the x axis")
    finite = np.concatenate([v[np.isfinite(v)] for v in ys.values()] + [np.zeros(1)])
    ylo, yhi = float(min(finite.min(), 0.0)), float(finite.max())
    if yhi <= ylo:
        yhi = ylo + 1.0
    xlo, xhi = float(x.min()), float(x.max())
    if xhi <= xlo:
        xhi = xlo + 1.0
    L, R, Tm, B = MARGIN["left"], MARGIN["right"], MARGIN["top"], MARGIN["bottom"]
    pw, ph = WIDTH - L - R, HEIGHT - Tm - B

    def px(v):
        return L + (v - xlo) / (xhi - xlo) * pw

    def py(v):
        return Tm + ph - (v - ylo) / (yhi - ylo) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
           f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<line x1="{L}" y1="{Tm + ph}" x2="{L + pw}" y2="{Tm + ph}" stroke="#000000"/>',
           f'<line x1="{L}" y1="{Tm}" x2="{L}" y2="{Tm + ph}" stroke="#000000"/>']
    for v in _ticks(ylo, yhi):
        out.append(f'<text x="{L - 6}" y="{py(v) + 4:.1f}" text-anchor="end">{v:.4g}</text>')
        out.append(f'<line x1="{L}" y1="{py(v):.1f}" x2="{L + pw}" y2="{py(v):.1f}" stroke="#dddddd"/>')
    for v in _ticks(xlo, xhi):
        out.append(f'<text x="{px(v):.1f}" y="{Tm + ph + 16}" text-anchor="middle">{v:.0f}</text>')
    out.append(f'<text x="{L + pw / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{Tm + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {Tm + ph / 2:.1f})">{escape(ylabel)}</text>')
    for n, (name, y) in enumerate(ys.items()):
        ok = np.isfinite(y)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[ok], y[ok]))
        color = COLORS[n % len(COLORS)]
        out.append(f'<polyline data-column={quoteattr(name)} fill="none" stroke="{color}" '
                   f'stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{L + pw - 4}" y="{Tm + 14 + 14 * n}" text-anchor="end" '
                   f'fill="{color}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_chart(path, x, series: dict, **labels) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(line_chart(x, series, **labels))
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    return path
