"""Minimal SVG line charts, one per diagnostics column."""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

WIDTH, HEIGHT, PAD = 480, 300, 48


def line_chart(xs, ys, title: str) -> str:
    pts = [(x, y) for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">\n'
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n'
        f'<text x="{WIDTH // 2}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">'
        f"{escape(title)}</text>\n"
    )
    if not pts:
        return head + '<text x="50%" y="50%" text-anchor="middle">no finite data</text>\n</svg>\n'
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5 * (abs(y0) or 1.0), y1 + 0.5 * (abs(y1) or 1.0)

    def sx(x):
        return PAD + (x - x0) / (x1 - x0) * (WIDTH - 2 * PAD)

    def sy(y):
        return HEIGHT - PAD - (y - y0) / (y1 - y0) * (HEIGHT - 2 * PAD)

    poly = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
    axes = (
        f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="black"/>\n'
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="black"/>\n'
    )
    labels = (
        f'<text x="{PAD}" y="{HEIGHT - PAD + 16}" font-size="10">{x0:.3g}</text>\n'
        f'<text x="{WIDTH - PAD}" y="{HEIGHT - PAD + 16}" font-size="10" text-anchor="end">{x1:.3g}</text>\n'
        f'<text x="{PAD - 4}" y="{HEIGHT - PAD}" font-size="10" text-anchor="end">{y0:.4g}</text>\n'
        f'<text x="{PAD - 4}" y="{PAD + 4}" font-size="10" text-anchor="end">{y1:.4g}</text>\n'
    )
    line = f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{poly}"/>\n'
    return head + axes + labels + line + "</svg>\n"


def write_plots(records, directory) -> list[Path]:
    """One chart per CSV column against ``t`` in ``directory``."""
    from .diagnostics import CSV_HEADER
    from .snapshot import atomic_write

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ts = [r.t for r in records]
    out = []
    for name in CSV_HEADER.split(",")[1:]:
        path = directory / f"{name}.svg"
        atomic_write(path, line_chart(ts, [getattr(r, name) for r in records], name))
        out.append(path)
    return out
