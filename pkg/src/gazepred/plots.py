"""Minimal self-contained SVG line and box plots for the report CSVs."""
from __future__ import annotations

from xml.sax.saxutils import escape

W, H = 480, 320
ML, MR, MT, MB = 56, 16, 28, 44


def _scale(lo, hi, a, b):
    span = (hi - lo) or 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def _frame(title, xlabel, ylabel, x0, x1, y0, y1):
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
             f'font-family="sans-serif" font-size="11">',
             f'<rect width="{W}" height="{H}" fill="white"/>',
             f'<text x="{W / 2}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>',
             f'<line x1="{ML}" y1="{H - MB}" x2="{W - MR}" y2="{H - MB}" stroke="black"/>',
             f'<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{H - MB}" stroke="black"/>',
             f'<text x="{(ML + W - MR) / 2}" y="{H - 8}" text-anchor="middle">{escape(xlabel)}</text>',
             f'<text x="14" y="{(MT + H - MB) / 2}" text-anchor="middle" '
             f'transform="rotate(-90 14 {(MT + H - MB) / 2})">{escape(ylabel)}</text>']
    for frac in (0.0, 0.5, 1.0):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        px = ML + frac * (W - ML - MR)
        py = H - MB - frac * (H - MT - MB)
        parts.append(f'<text x="{px:.1f}" y="{H - MB + 14}" text-anchor="middle">{xv:.3g}</text>')
        parts.append(f'<text x="{ML - 4}" y="{py + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    return parts


def line_svg(points, title: str, xlabel: str, ylabel: str) -> str:
    """Polyline through ``(x, y)`` points."""
    xs = [p[0] for p in points] or [0.0]
    ys = [p[1] for p in points] or [0.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(0.0, min(ys)), max(ys)
    sx = _scale(x0, x1, ML, W - MR)
    sy = _scale(y0, y1, H - MB, MT)
    parts = _frame(title, xlabel, ylabel, x0, x1, y0, y1)
    path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in points)
    parts.append(f'<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{path}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def box_svg(stats: dict, title: str, ylabel: str) -> str:
    """Tukey boxes from ``boxplot_stats`` output; the cross marks the mean."""
    names = list(stats)
    if not names:
        return line_svg([], title, "", ylabel)
    y0 = min(0.0, min(s["whisker_lo"] for s in stats.values()))
    y1 = max(max(s["whisker_hi"] for s in stats.values()), max(s["mean"] for s in stats.values()))
    sy = _scale(y0, y1, H - MB, MT)
    parts = _frame(title, "", ylabel, 0, len(names), y0, y1)
    slot = (W - ML - MR) / len(names)
    for i, name in enumerate(names):
        s = stats[name]
        cx = ML + slot * (i + 0.5)
        hw = slot * 0.3
        parts += [
            f'<line x1="{cx}" y1="{sy(s["whisker_lo"]):.2f}" x2="{cx}" y2="{sy(s["q1"]):.2f}" stroke="black"/>',
            f'<line x1="{cx}" y1="{sy(s["q3"]):.2f}" x2="{cx}" y2="{sy(s["whisker_hi"]):.2f}" stroke="black"/>',
            f'<rect x="{cx - hw:.2f}" y="{sy(s["q3"]):.2f}" width="{2 * hw:.2f}" '
            f'height="{max(0.5, sy(s["q1"]) - sy(s["q3"])):.2f}" fill="#c6dbef" stroke="black"/>',
            f'<line x1="{cx - hw:.2f}" y1="{sy(s["median"]):.2f}" x2="{cx + hw:.2f}" '
            f'y2="{sy(s["median"]):.2f}" stroke="black" stroke-width="2"/>',
            f'<text x="{cx}" y="{sy(s["mean"]) + 4:.2f}" text-anchor="middle">x</text>',
            f'<text x="{cx}" y="{H - MB + 28}" text-anchor="middle">{escape(name)}</text>',
        ]
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
