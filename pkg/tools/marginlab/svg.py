"""
MarginLab - Static SVG line charts

Output is a pure function of the input series, so identical inputs give
byte-identical files.
"""
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

# Series colors (cycled)
COLORS = [
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#ff7f0e",
    "#9467bd",
    "#8c564b",
]

WIDTH = 960
HEIGHT = 600
MARGIN_LEFT = 90
MARGIN_RIGHT = 240
MARGIN_TOP = 70
MARGIN_BOTTOM = 90
TICK_COUNT = 5


@dataclass
class Series:
    label: str
    points: List[Tuple[float, float]] = field(default_factory=list)
    dashed: bool = False


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
        .replace("'", "&#39;")
    )


def _format_tick(value: float) -> str:
    if abs(value) >= 100:
        return f"{value:.0f}"
    if abs(value) >= 10:
        return f"{value:.1f}"
    return f"{value:.2f}"


def _bounds(values: List[float], default: Tuple[float, float]) -> Tuple[float, float]:
    if not values:
        return default
    lo, hi = min(values), max(values)
    if lo == hi:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


def render_line_chart(title: str, x_label: str, y_label: str, series: Sequence[Series]) -> str:
    """
    Build the SVG text for a multi-series line chart.

    Non-finite points are dropped. With no points at all the chart still has
    axes, ticks and labels over a unit range.
    """
    clean = [
        Series(s.label, [(x, y) for x, y in s.points if math.isfinite(x) and math.isfinite(y)], s.dashed)
        for s in series
    ]
    xs = [x for s in clean for x, _ in s.points]
    ys = [y for s in clean for _, y in s.points]
    x_min, x_max = _bounds(xs, (0.0, 1.0))
    y_min, y_max = _bounds(ys, (0.0, 1.0))

    plot_left = MARGIN_LEFT
    plot_right = WIDTH - MARGIN_RIGHT
    plot_top = MARGIN_TOP
    plot_bottom = HEIGHT - MARGIN_BOTTOM

    def x_to_px(x: float) -> float:
        return plot_left + (x - x_min) / (x_max - x_min) * (plot_right - plot_left)

    def y_to_px(y: float) -> float:
        return plot_bottom - (y - y_min) / (y_max - y_min) * (plot_bottom - plot_top)

    lines: List[str] = []
    lines.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">')
    lines.append('<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>')
    lines.append(
        f'<text x="{WIDTH / 2:.1f}" y="36" text-anchor="middle" font-size="22" font-family="Arial">{_escape(title)}</text>'
    )

    # Grid and ticks
    for i in range(TICK_COUNT + 1):
        yv = y_min + (y_max - y_min) * i / TICK_COUNT
        y = y_to_px(yv)
        lines.append(f'<line x1="{plot_left}" y1="{y:.2f}" x2="{plot_right}" y2="{y:.2f}" stroke="#d9d9d9" stroke-width="1"/>')
        lines.append(
            f'<text x="{plot_left - 10}" y="{y + 5:.2f}" text-anchor="end" font-size="13" font-family="Arial">{_format_tick(yv)}</text>'
        )
        xv = x_min + (x_max - x_min) * i / TICK_COUNT
        x = x_to_px(xv)
        lines.append(f'<line x1="{x:.2f}" y1="{plot_bottom}" x2="{x:.2f}" y2="{plot_bottom + 6}" stroke="#000000" stroke-width="1"/>')
        lines.append(
            f'<text x="{x:.2f}" y="{plot_bottom + 26}" text-anchor="middle" font-size="13" font-family="Arial">{_format_tick(xv)}</text>'
        )

    # Axes
    lines.append(f'<line x1="{plot_left}" y1="{plot_bottom}" x2="{plot_right}" y2="{plot_bottom}" stroke="#000000" stroke-width="2"/>')
    lines.append(f'<line x1="{plot_left}" y1="{plot_top}" x2="{plot_left}" y2="{plot_bottom}" stroke="#000000" stroke-width="2"/>')

    # Series and legend
    legend_x = plot_right + 22
    for idx, s in enumerate(clean):
        color = COLORS[idx % len(COLORS)]
        dash = ' stroke-dasharray="8 5"' if s.dashed else ""
        pts = sorted(s.points)
        if pts:
            poly = " ".join(f"{x_to_px(x):.2f},{y_to_px(y):.2f}" for x, y in pts)
            lines.append(f'<polyline fill="none" stroke="{color}" stroke-width="2.5"{dash} points="{poly}"/>')
        ly = plot_top + 22 + idx * 26
        lines.append(f'<line x1="{legend_x}" y1="{ly}" x2="{legend_x + 26}" y2="{ly}" stroke="{color}" stroke-width="3"{dash}/>')
        lines.append(
            f'<text x="{legend_x + 34}" y="{ly + 5}" text-anchor="start" font-size="14" font-family="Arial">{_escape(s.label)}</text>'
        )

    # Axis labels
    mid_y = (plot_top + plot_bottom) / 2
    lines.append(
        f'<text x="{(plot_left + plot_right) / 2:.1f}" y="{HEIGHT - 25}" text-anchor="middle" font-size="16" font-family="Arial">{_escape(x_label)}</text>'
    )
    lines.append(
        f'<text x="26" y="{mid_y:.1f}" text-anchor="middle" font-size="16" font-family="Arial" transform="rotate(-90 26 {mid_y:.1f})">{_escape(y_label)}</text>'
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_line_chart_svg(output_path: str, title: str, x_label: str, y_label: str, series: Sequence[Series]) -> None:
    path = Path(output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_line_chart(title, x_label, y_label, series), encoding="utf-8")
