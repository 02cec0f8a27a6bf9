"""Minimal self-contained SVG line charts (no plotting dependency).

Just enough for the CLI's two panels: polylines, scatter points with
error bars, dashed reference lines, ticks, and labels. All geometry is
emitted inline; the output has no external assets.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Panel:
    """One chart: curves, points with error bars, reference lines."""

    title: str
    xlabel: str
    ylabel: str
    xlim: tuple[float, float]
    ylim: tuple[float, float]
    curves: list = field(default_factory=list)   # (xs, ys, color, dash)
    points: list = field(default_factory=list)   # (xs, ys, yerr, color)
    hlines: list = field(default_factory=list)   # (y, color, dash, label)

    def add_curve(self, xs, ys, color="#1f77b4", dash=None):
        self.curves.append((list(xs), list(ys), color, dash))

    def add_points(self, xs, ys, yerr=None, color="#d62728"):
        self.points.append((list(xs), list(ys), None if yerr is None else list(yerr), color))

    def add_hline(self, y, color="#777777", dash="6,4", label=None):
        self.hlines.append((y, color, dash, label))


def _ticks(low: float, high: float, n: int = 5) -> list[float]:
    if high <= low:
        high = low + 1.0
    step = (high - low) / (n - 1)
    return [low + i * step for i in range(n)]


def _fmt(value: float) -> str:
    return f"{value:.4g}"


class _Scale:
    def __init__(self, panel: Panel, x0: float, y0: float, width: float, height: float):
        self.panel, self.x0, self.y0, self.width, self.height = panel, x0, y0, width, height

    def x(self, value: float) -> float:
        lo, hi = self.panel.xlim
        return self.x0 + (value - lo) / (hi - lo) * self.width

    def y(self, value: float) -> float:
        lo, hi = self.panel.ylim
        return self.y0 + self.height - (value - lo) / (hi - lo) * self.height


def render_panels(panels: list[Panel], width: int = 860, panel_height: int = 330) -> str:
    """Render stacked panels to one SVG document string."""
    margin_left, margin_right, margin_top, margin_bottom = 70, 30, 40, 50
    total_height = panel_height * len(panels)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{total_height}" viewBox="0 0 {width} {total_height}">',
        f'<rect width="{width}" height="{total_height}" fill="white"/>',
    ]
    for index, panel in enumerate(panels):
        x0 = margin_left
        y0 = index * panel_height + margin_top
        plot_w = width - margin_left - margin_right
        plot_h = panel_height - margin_top - margin_bottom
        scale = _Scale(panel, x0, y0, plot_w, plot_h)
        parts.append(f'<rect x="{x0}" y="{y0}" width="{plot_w}" height="{plot_h}" '
                     'fill="none" stroke="#333333"/>')
        parts.append(f'<text x="{x0 + plot_w / 2:.1f}" y="{y0 - 14}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="15">{panel.title}</text>')
        for tick in _ticks(*panel.xlim):
            px = scale.x(tick)
            parts.append(f'<line x1="{px:.1f}" y1="{y0 + plot_h}" x2="{px:.1f}" '
                         f'y2="{y0 + plot_h + 5}" stroke="#333333"/>')
            parts.append(f'<text x="{px:.1f}" y="{y0 + plot_h + 20}" text-anchor="middle" '
                         f'font-family="sans-serif" font-size="11">{_fmt(tick)}</text>')
        for tick in _ticks(*panel.ylim):
            py = scale.y(tick)
            parts.append(f'<line x1="{x0 - 5}" y1="{py:.1f}" x2="{x0}" y2="{py:.1f}" '
                         'stroke="#333333"/>')
            parts.append(f'<text x="{x0 - 9}" y="{py + 4:.1f}" text-anchor="end" '
                         f'font-family="sans-serif" font-size="11">{_fmt(tick)}</text>')
        parts.append(f'<text x="{x0 + plot_w / 2:.1f}" y="{y0 + plot_h + 38}" '
                     f'text-anchor="middle" font-family="sans-serif" font-size="13">'
                     f'{panel.xlabel}</text>')
        parts.append(f'<text x="{x0 - 52}" y="{y0 + plot_h / 2:.1f}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="13" '
                     f'transform="rotate(-90 {x0 - 52} {y0 + plot_h / 2:.1f})">'
                     f'{panel.ylabel}</text>')
        for y_value, color, dash, label in panel.hlines:
            py = scale.y(y_value)
            dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
            parts.append(f'<line x1="{x0}" y1="{py:.1f}" x2="{x0 + plot_w}" y2="{py:.1f}" '
                         f'stroke="{color}"{dash_attr}/>')
            if label:
                parts.append(f'<text x="{x0 + plot_w - 4}" y="{py - 4:.1f}" text-anchor="end" '
                             f'font-family="sans-serif" font-size="11" fill="{color}">'
                             f'{label}</text>')
        for xs, ys, color, dash in panel.curves:
            coords = " ".join(f"{scale.x(x):.2f},{scale.y(y):.2f}" for x, y in zip(xs, ys))
            dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
            parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                         f'stroke-width="1.8"{dash_attr}/>')
        for xs, ys, yerr, color in panel.points:
            for i, (x, y) in enumerate(zip(xs, ys)):
                px, py = scale.x(x), scale.y(y)
                if yerr is not None:
                    top, bottom = scale.y(y + yerr[i]), scale.y(y - yerr[i])
                    parts.append(f'<line x1="{px:.2f}" y1="{top:.2f}" x2="{px:.2f}" '
                                 f'y2="{bottom:.2f}" stroke="{color}"/>')
                parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3" fill="{color}"/>')
    parts.append("</svg>")
    return "\n".join(parts)
