"""Minimal SVG line plots: panels with a shaded band and polylines."""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Figure", "Panel", "nice_ticks"]


def nice_ticks(lo: float, hi: float, target: int = 5) -> np.ndarray:
    """Round tick positions covering ``[lo, hi]``."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return np.array([])
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(target, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = np.arange(start, hi + 1e-9 * step, step)
    return np.round(ticks, 12)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


class Panel:
    """One plotting area; coordinates are mapped to its pixel box on save."""

    def __init__(self, x0, y0, w, h, title=""):
        self.box = (x0, y0, w, h)
        self.title = title
        self.items = []
        self.xlim = None
        self.ylim = None

    def _extend(self, x, *ys):
        x = np.asarray(x, dtype=float)
        xl = (float(np.min(x)), float(np.max(x)))
        yv = np.concatenate([np.asarray(y, dtype=float).ravel() for y in ys])
        yv = yv[np.isfinite(yv)]
        yl = (float(yv.min()), float(yv.max())) if yv.size else (0.0, 1.0)
        self.xlim = xl if self.xlim is None else (min(self.xlim[0], xl[0]), max(self.xlim[1], xl[1]))
        self.ylim = yl if self.ylim is None else (min(self.ylim[0], yl[0]), max(self.ylim[1], yl[1]))

    def band(self, x, lower, upper, fill="#c8c8c8"):
        self._extend(x, lower, upper)
        self.items.append(("band", np.asarray(x, float), np.asarray(lower, float),
                           np.asarray(upper, float), fill))
        return self

    def line(self, x, y, color="black", width=1.5, label=None):
        self._extend(x, y)
        self.items.append(("line", np.asarray(x, float), np.asarray(y, float), color, width, label))
        return self

    def _render(self) -> list[str]:
        x0, y0, w, h = self.box
        ml, mr, mt, mb = 50, 10, 24, 30
        px0, py0, pw, ph = x0 + ml, y0 + mt, w - ml - mr, h - mt - mb
        xlo, xhi = self.xlim or (0.0, 1.0)
        ylo, yhi = self.ylim or (0.0, 1.0)
        if yhi <= ylo:
            yhi = ylo + 1.0
        pad = 0.05 * (yhi - ylo)
        ylo, yhi = ylo - pad, yhi + pad
        if xhi <= xlo:
            xhi = xlo + 1.0

        def X(v):
            return px0 + (np.asarray(v) - xlo) / (xhi - xlo) * pw

        def Y(v):
            return py0 + ph - (np.asarray(v) - ylo) / (yhi - ylo) * ph

        out = [f'<rect x="{px0}" y="{py0}" width="{pw}" height="{ph}" fill="white" stroke="black"/>']
        for it in self.items:
            if it[0] == "band":
                _, x, lo, hi, fill = it
                pts = list(zip(X(x), Y(hi))) + list(zip(X(x[::-1]), Y(lo[::-1])))
                d = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
                out.append(f'<polygon points="{d}" fill="{fill}" stroke="none"/>')
        for it in self.items:
            if it[0] == "line":
                _, x, y, color, width, _label = it
                d = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(X(x), Y(y)))
                out.append(f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="{width}"/>')
        for t in nice_ticks(xlo, xhi):
            tx = float(X(t))
            out.append(f'<line x1="{tx:.2f}" y1="{py0 + ph}" x2="{tx:.2f}" y2="{py0 + ph + 4}" stroke="black"/>')
            out.append(f'<text x="{tx:.2f}" y="{py0 + ph + 16}" font-size="10" '
                       f'text-anchor="middle">{_fmt(t)}</text>')
        for t in nice_ticks(ylo, yhi):
            ty = float(Y(t))
            out.append(f'<line x1="{px0 - 4}" y1="{ty:.2f}" x2="{px0}" y2="{ty:.2f}" stroke="black"/>')
            out.append(f'<text x="{px0 - 6}" y="{ty + 3:.2f}" font-size="10" '
                       f'text-anchor="end">{_fmt(t)}</text>')
        if self.title:
            out.append(f'<text x="{px0 + pw / 2:.2f}" y="{y0 + 16}" font-size="12" '
                       f'text-anchor="middle">{escape(self.title)}</text>')
        return out


class Figure:
    """Grid of panels written as one SVG document."""

    def __init__(self, rows=1, cols=1, panel_w=360, panel_h=260, title=""):
        self.rows, self.cols = rows, cols
        self.pw, self.ph = panel_w, panel_h
        self.title = title
        self.top = 24 if title else 0
        self.panels = {}

    def panel(self, r=0, c=0, title="") -> Panel:
        if (r, c) not in self.panels:
            self.panels[(r, c)] = Panel(c * self.pw, self.top + r * self.ph, self.pw, self.ph, title)
        return self.panels[(r, c)]

    def to_string(self) -> str:
        W, H = self.cols * self.pw, self.top + self.rows * self.ph
        parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
                 f'viewBox="0 0 {W} {H}" font-family="sans-serif">',
                 f'<rect width="{W}" height="{H}" fill="white"/>']
        if self.title:
            parts.append(f'<text x="{W / 2}" y="17" font-size="14" text-anchor="middle">'
                         f'{escape(self.title)}</text>')
        for key in sorted(self.panels):
            parts.extend(self.panels[key]._render())
        parts.append("</svg>")
        return "\n".join(parts) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_string())
        return path
