"""Minimal SVG writer for diagnostic figures."""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np
from matplotlib.ticker import MaxNLocator

PALETTE = ("#1b1b1b", "#9a9a9a", "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3")


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _tick_label(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.1e}"
    return f"{v:.4g}"


@dataclass
class Panel:
    x: float
    y: float
    width: float
    height: float
    xlim: tuple[float, float]
    ylim: tuple[float, float]
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    items: list[str] = field(default_factory=list)
    xticks: list[tuple[float, str]] | None = None

    def px(self, xs) -> np.ndarray:
        x0, x1 = self.xlim
        return self.x + (np.asarray(xs, dtype=float) - x0) / (x1 - x0) * self.width

    def py(self, ys) -> np.ndarray:
        y0, y1 = self.ylim
        return self.y + self.height - (np.asarray(ys, dtype=float) - y0) / (y1 - y0) * self.height

    def _points(self, xs, ys) -> str:
        xs, ys = self.px(xs), self.py(ys)
        ok = np.isfinite(xs) & np.isfinite(ys)
        return " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(xs[ok], ys[ok]))

    def line(self, xs, ys, color="#1b1b1b", width=1.5, dash: str | None = None, closed=False):
        tag = "polygon" if closed else "polyline"
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(f'<{tag} points="{self._points(xs, ys)}" fill="none" stroke="{color}" '
                          f'stroke-width="{width}"{d}/>')

    def circle(self, x, y, r=3.0, color="#1b1b1b", opacity=1.0, stroke: str | None = None):
        s = f' stroke="{stroke}"' if stroke else ""
        self.items.append(f'<circle cx="{_fmt(float(self.px(x)))}" cy="{_fmt(float(self.py(y)))}" r="{_fmt(r)}" '
                          f'fill="{color}" fill-opacity="{opacity}"{s}/>')

    def marker_x(self, x, y, size=3.0, color="#1b1b1b"):
        cx, cy = float(self.px(x)), float(self.py(y))
        self.items.append(f'<path d="M{_fmt(cx - size)},{_fmt(cy - size)} L{_fmt(cx + size)},{_fmt(cy + size)} '
                          f'M{_fmt(cx - size)},{_fmt(cy + size)} L{_fmt(cx + size)},{_fmt(cy - size)}" '
                          f'stroke="{color}" stroke-width="1.2"/>')

    def rect(self, x0, y0, x1, y1, color="#9a9a9a", stroke="#1b1b1b"):
        a, b = float(self.px(min(x0, x1))), float(self.px(max(x0, x1)))
        c, d = float(self.py(max(y0, y1))), float(self.py(min(y0, y1)))
        self.items.append(f'<rect x="{_fmt(a)}" y="{_fmt(c)}" width="{_fmt(b - a)}" height="{_fmt(d - c)}" '
                          f'fill="{color}" stroke="{stroke}" stroke-width="0.6"/>')

    def hline(self, y, color="#1b1b1b", dash="4,3", width=1.0):
        self.line(list(self.xlim), [y, y], color=color, dash=dash, width=width)

    def text(self, x, y, label, size=10, anchor="start", color="#1b1b1b"):
        self.items.append(f'<text x="{_fmt(float(self.px(x)))}" y="{_fmt(float(self.py(y)))}" font-size="{size}" '
                          f'text-anchor="{anchor}" fill="{color}">{escape(label)}</text>')

    def render(self) -> str:
        out = [f'<g font-family="sans-serif">',
               f'<rect x="{_fmt(self.x)}" y="{_fmt(self.y)}" width="{_fmt(self.width)}" '
               f'height="{_fmt(self.height)}" fill="none" stroke="#1b1b1b" stroke-width="0.8"/>']
        xt = self.xticks if self.xticks is not None else [
            (v, _tick_label(v)) for v in MaxNLocator(6).tick_values(*self.xlim) if self.xlim[0] <= v <= self.xlim[1]]
        for v, lab in xt:
            px = float(self.px(v))
            yb = self.y + self.height
            out.append(f'<line x1="{_fmt(px)}" y1="{_fmt(yb)}" x2="{_fmt(px)}" y2="{_fmt(yb + 4)}" stroke="#1b1b1b"/>')
            out.append(f'<text x="{_fmt(px)}" y="{_fmt(yb + 15)}" font-size="9" text-anchor="middle">'
                       f'{escape(lab)}</text>')
        for v in MaxNLocator(5).tick_values(*self.ylim):
            if not self.ylim[0] <= v <= self.ylim[1]:
                continue
            py = float(self.py(v))
            out.append(f'<line x1="{_fmt(self.x - 4)}" y1="{_fmt(py)}" x2="{_fmt(self.x)}" y2="{_fmt(py)}" '
                       f'stroke="#1b1b1b"/>')
            out.append(f'<text x="{_fmt(self.x - 6)}" y="{_fmt(py + 3)}" font-size="9" text-anchor="end">'
                       f'{escape(_tick_label(v))}</text>')
        if self.title:
            out.append(f'<text x="{_fmt(self.x + self.width / 2)}" y="{_fmt(self.y - 8)}" font-size="11" '
                       f'text-anchor="middle">{escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{_fmt(self.x + self.width / 2)}" y="{_fmt(self.y + self.height + 32)}" '
                       f'font-size="10" text-anchor="middle">{escape(self.xlabel)}</text>')
        if self.ylabel:
            cx, cy = self.x - 42, self.y + self.height / 2
            out.append(f'<text x="{_fmt(cx)}" y="{_fmt(cy)}" font-size="10" text-anchor="middle" '
                       f'transform="rotate(-90 {_fmt(cx)} {_fmt(cy)})">{escape(self.ylabel)}</text>')
        out.append(f'<clipPath id="clip{id(self)}"><rect x="{_fmt(self.x)}" y="{_fmt(self.y)}" '
                   f'width="{_fmt(self.width)}" height="{_fmt(self.height)}"/></clipPath>')
        out.append(f'<g clip-path="url(#clip{id(self)})">')
        out.extend(self.items)
        out.append("</g></g>")
        return "\n".join(out)


class Figure:
    """Grid of panels written as one standalone SVG document."""

    def __init__(self, n_rows: int = 1, n_cols: int = 1, panel_width: float = 260, panel_height: float = 200,
                 margin: tuple[float, float, float, float] = (40, 20, 50, 65), title: str = ""):
        top, right, bottom, left = margin
        self.n_rows, self.n_cols = n_rows, n_cols
        self.pw, self.ph = panel_width, panel_height
        self.margin = margin
        self.title = title
        self.width = n_cols * (panel_width + left + right)
        self.height = n_rows * (panel_height + top + bottom) + (20 if title else 0)
        self.panels: list[Panel] = []
        self.legend_items: list[tuple[str, str, str | None]] = []

    def panel(self, row: int, col: int, xlim, ylim, **kwargs) -> Panel:
        top, right, bottom, left = self.margin
        x = col * (self.pw + left + right) + left
        y = row * (self.ph + top + bottom) + top + (20 if self.title else 0)
        if xlim[0] == xlim[1]:
            xlim = (xlim[0] - 0.5, xlim[1] + 0.5)
        if ylim[0] == ylim[1]:
            ylim = (ylim[0] - 0.5, ylim[1] + 0.5)
        p = Panel(x, y, self.pw, self.ph, tuple(map(float, xlim)), tuple(map(float, ylim)), **kwargs)
        self.panels.append(p)
        return p

    def legend(self, label: str, color: str, dash: str | None = None):
        self.legend_items.append((label, color, dash))

    def render(self) -> str:
        # legend rows sit above the panels so they never cover a title
        extra = max(0.0, 14.0 * len(self.legend_items) + 4 - (20 if self.title else 0))
        height = self.height + extra
        parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(self.width)}" height="{_fmt(height)}" '
                 f'viewBox="0 0 {_fmt(self.width)} {_fmt(height)}">',
                 '<rect width="100%" height="100%" fill="white"/>']
        if self.title:
            parts.append(f'<text x="{_fmt(self.width / 2)}" y="16" font-size="13" font-family="sans-serif" '
                         f'text-anchor="middle">{escape(self.title)}</text>')
        parts.append(f'<g transform="translate(0,{_fmt(extra)})">')
        parts.extend(p.render() for p in self.panels)
        parts.append("</g>")
        for i, (label, color, dash) in enumerate(self.legend_items):
            y = 14 + 14 * i
            x = self.width - 150
            d = f' stroke-dasharray="{dash}"' if dash else ""
            parts.append(f'<line x1="{x}" y1="{y}" x2="{x + 22}" y2="{y}" stroke="{color}" stroke-width="2"{d}/>')
            parts.append(f'<text x="{x + 27}" y="{y + 4}" font-size="10" font-family="sans-serif">'
                         f'{escape(label)}</text>')
        parts.append("</svg>")
        return "\n".join(parts) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())
