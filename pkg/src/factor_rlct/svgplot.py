"""A tiny scatter-plus-line SVG writer for regression diagnostics."""

from __future__ import annotations

from xml.sax.saxutils import escape

WIDTH, HEIGHT, MARGIN = 560, 400, 60


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def scatter_with_line(points, slope, intercept, *, title="", xlabel="", ylabel="", series=None) -> str:
    """SVG of ``points`` (list of (x, y)) with the line ``y = slope x + intercept``.

    ``series`` optionally maps a label to extra point lists drawn in grey.
    """
    all_pts = list(points)
    for pts in (series or {}).values():
        all_pts.extend(pts)
    if not all_pts:
        raise ValueError("nothing to plot")
    xs = [x for x, _ in all_pts]
    ys = [y for _, y in all_pts]
    x0, x1 = min(xs), max(xs)
    line_ys = [slope * x0 + intercept, slope * x1 + intercept]
    y0, y1 = min(ys + line_ys), max(ys + line_ys)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(x):
        return MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2 * MARGIN)

    def sy(y):
        return HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2 * MARGIN)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(
            f'<text x="{sx(t):.1f}" y="{HEIGHT - MARGIN + 16}" font-size="11" '
            f'text-anchor="middle">{t:.3g}</text>'
        )
    for t in _ticks(y0, y1):
        out.append(
            f'<text x="{MARGIN - 6}" y="{sy(t) + 4:.1f}" font-size="11" text-anchor="end">{t:.3g}</text>'
        )
    for pts in (series or {}).values():
        for x, y in pts:
            out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2" fill="#bbbbbb"/>')
    for x, y in points:
        out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="4" fill="#1f77b4"/>')
    out.append(
        f'<line x1="{sx(x0):.1f}" y1="{sy(line_ys[0]):.1f}" x2="{sx(x1):.1f}" '
        f'y2="{sy(line_ys[1]):.1f}" stroke="#d62728" stroke-width="2"/>'
    )
    out.append(
        f'<text x="{WIDTH / 2}" y="{MARGIN / 2}" font-size="14" text-anchor="middle">{escape(title)}</text>'
    )
    out.append(
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 15}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>'
    )
    out.append(
        f'<text x="15" y="{HEIGHT / 2}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 15 {HEIGHT / 2})">{escape(ylabel)}</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"
