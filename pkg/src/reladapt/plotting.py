"""Dependency-free SVG learning-curve plots.

Each figure embeds its numeric table in an XML comment so plots can be
regression-diffed without parsing geometry.
"""

from __future__ import annotations

from pathlib import Path

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 16, 28, 44


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _fmt(v: float) -> str:
    if abs(v) >= 1000:
        return f"{v:.0f}"
    return f"{v:.4g}"


def plot_curves_svg(path, curves: dict[str, tuple[list[float], list[float]]],
                    title: str, xlabel: str = "environment steps",
                    ylabel: str = "cumulative successes") -> None:
    """curves: name -> (xs, ys). Writes an SVG with an embedded data table."""
    xs_all = [x for xs, _ in curves.values() for x in xs]
    ys_all = [y for _, ys in curves.values() for y in ys]
    x_lo, x_hi = (min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0)
    y_lo, y_hi = 0.0, (max(ys_all) if ys_all else 1.0)
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(x):
        return MARGIN_L + plot_w * (x - x_lo) / (x_hi - x_lo) if x_hi > x_lo else MARGIN_L

    def py(y):
        return MARGIN_T + plot_h * (1.0 - (y - y_lo) / (y_hi - y_lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="monospace" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="16" text-anchor="middle" font-size="13">{title}</text>',
    ]
    # axes
    parts.append(f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" '
                 f'y2="{HEIGHT - MARGIN_B}" stroke="black"/>')
    parts.append(f'<line x1="{MARGIN_L}" y1="{HEIGHT - MARGIN_B}" x2="{WIDTH - MARGIN_R}" '
                 f'y2="{HEIGHT - MARGIN_B}" stroke="black"/>')
    for tx in _ticks(x_lo, x_hi):
        parts.append(f'<line x1="{px(tx):.1f}" y1="{HEIGHT - MARGIN_B}" x2="{px(tx):.1f}" '
                     f'y2="{HEIGHT - MARGIN_B + 4}" stroke="black"/>')
        parts.append(f'<text x="{px(tx):.1f}" y="{HEIGHT - MARGIN_B + 16}" '
                     f'text-anchor="middle">{_fmt(tx)}</text>')
    for ty in _ticks(y_lo, y_hi):
        parts.append(f'<line x1="{MARGIN_L - 4}" y1="{py(ty):.1f}" x2="{MARGIN_L}" '
                     f'y2="{py(ty):.1f}" stroke="black"/>')
        parts.append(f'<text x="{MARGIN_L - 7}" y="{py(ty) + 4:.1f}" '
                     f'text-anchor="end">{_fmt(ty)}</text>')
    parts.append(f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 8}" '
                 f'text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="14" y="{HEIGHT / 2:.0f}" text-anchor="middle" '
                 f'transform="rotate(-90 14 {HEIGHT / 2:.0f})">{ylabel}</text>')

    for i, (name, (xs, ys)) in enumerate(curves.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = MARGIN_T + 14 + 14 * i
        parts.append(f'<line x1="{WIDTH - MARGIN_R - 150}" y1="{ly - 4}" '
                     f'x2="{WIDTH - MARGIN_R - 130}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{WIDTH - MARGIN_R - 125}" y="{ly}">{name}</text>')

    # embedded numeric table for regression diffing
    table = ["series,x,y"]
    for name, (xs, ys) in curves.items():
        for x, y in zip(xs, ys):
            table.append(f"{name},{_fmt(x)},{_fmt(y)}")
    parts.append("<!--data\n" + "\n".join(table) + "\n-->")
    parts.append("</svg>")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
