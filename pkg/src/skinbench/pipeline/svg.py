"""Hand-rolled SVG plots (heatmap, box plot): byte-deterministic output.

No plotting library: reports must regenerate byte-identically for identical
inputs, so everything here is plain string assembly with fixed float
formats.
"""

from __future__ import annotations

from typing import Sequence


def _esc(text: str) -> str:
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _document(width: float, height: float, body: list[str], config_hash: str) -> str:
    head = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f"<!-- config_hash={config_hash} -->",
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}" '
        'font-family="sans-serif">',
        f'<rect x="0" y="0" width="{width:.0f}" height="{height:.0f}" fill="white"/>',
    ]
    return "\n".join(head + body + ["</svg>", ""])


def _heat_fill(fraction: float) -> str:
    # White toward a deep indigo.
    r = round(255 + (49 - 255) * fraction)
    g = round(255 + (54 - 255) * fraction)
    b = round(255 + (149 - 255) * fraction)
    return f"rgb({r},{g},{b})"


def heatmap_svg(
    counts: Sequence[Sequence[int]],
    row_labels: Sequence[str],
    col_labels: Sequence[str],
    title: str,
    config_hash: str,
    row_axis: str = "ground truth",
    col_axis: str = "rendered",
) -> str:
    cell = 52
    left, top = 110, 80
    n_rows, n_cols = len(row_labels), len(col_labels)
    width = left + n_cols * cell + 30
    height = top + n_rows * cell + 60
    peak = max((max(row) for row in counts), default=0)

    body = [
        f'<text x="{width / 2:.0f}" y="28" text-anchor="middle" font-size="16">'
        f"{_esc(title)}</text>",
        f'<text x="{left + n_cols * cell / 2:.0f}" y="{top - 28}" '
        f'text-anchor="middle" font-size="12">{_esc(col_axis)}</text>',
        f'<text x="24" y="{top + n_rows * cell / 2:.0f}" text-anchor="middle" '
        f'font-size="12" transform="rotate(-90 24 {top + n_rows * cell / 2:.0f})">'
        f"{_esc(row_axis)}</text>",
    ]
    for j, label in enumerate(col_labels):
        body.append(
            f'<text x="{left + j * cell + cell / 2:.0f}" y="{top - 8}" '
            f'text-anchor="middle" font-size="12">{_esc(label)}</text>'
        )
    for i, row_label in enumerate(row_labels):
        body.append(
            f'<text x="{left - 10}" y="{top + i * cell + cell / 2 + 4:.0f}" '
            f'text-anchor="end" font-size="12">{_esc(row_label)}</text>'
        )
        for j in range(n_cols):
            value = counts[i][j]
            frac = 0.0 if peak == 0 else value / peak
            fill = _heat_fill(frac)
            text_fill = "#ffffff" if frac > 0.55 else "#202020"
            x, y = left + j * cell, top + i * cell
            body.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{fill}" stroke="#cccccc"/>'
            )
            body.append(
                f'<text x="{x + cell / 2:.0f}" y="{y + cell / 2 + 4:.0f}" '
                f'text-anchor="middle" font-size="12" fill="{text_fill}">'
                f"{value}</text>"
            )
    return _document(width, height, body, config_hash)


def boxplot_svg(
    labels: Sequence[str],
    stats: Sequence[tuple[float, float, float, float, float]],
    title: str,
    ylabel: str,
    config_hash: str,
) -> str:
    """Box plots from (min, q1, median, q3, max) tuples per label."""
    left, top, bottom = 70, 60, 50
    slot = 80
    plot_h = 260
    width = left + len(labels) * slot + 30
    height = top + plot_h + bottom

    lo = min(s[0] for s in stats)
    hi = max(s[4] for s in stats)
    if hi <= lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    def ypix(v: float) -> float:
        return top + plot_h * (1.0 - (v - lo) / (hi - lo))

    body = [
        f'<text x="{width / 2:.0f}" y="26" text-anchor="middle" font-size="16">'
        f"{_esc(title)}</text>",
        f'<text x="20" y="{top + plot_h / 2:.0f}" text-anchor="middle" '
        f'font-size="12" transform="rotate(-90 20 {top + plot_h / 2:.0f})">'
        f"{_esc(ylabel)}</text>",
        f'<line x1="{left - 8}" y1="{top}" x2="{left - 8}" '
        f'y2="{top + plot_h}" stroke="#444444"/>',
    ]
    for i in range(5):
        v = lo + (hi - lo) * i / 4.0
        y = ypix(v)
        body.append(
            f'<line x1="{left - 12}" y1="{y:.2f}" x2="{left - 4}" y2="{y:.2f}" '
            'stroke="#444444"/>'
        )
        body.append(
            f'<text x="{left - 16}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-size="10">{v:.3g}</text>'
        )

    for i, (label, (mn, q1, med, q3, mx)) in enumerate(zip(labels, stats)):
        cx = left + i * slot + slot / 2
        half = 18
        body += [
            f'<line x1="{cx:.2f}" y1="{ypix(mx):.2f}" x2="{cx:.2f}" '
            f'y2="{ypix(q3):.2f}" stroke="#333333"/>',
            f'<line x1="{cx:.2f}" y1="{ypix(q1):.2f}" x2="{cx:.2f}" '
            f'y2="{ypix(mn):.2f}" stroke="#333333"/>',
            f'<line x1="{cx - 10:.2f}" y1="{ypix(mx):.2f}" x2="{cx + 10:.2f}" '
            f'y2="{ypix(mx):.2f}" stroke="#333333"/>',
            f'<line x1="{cx - 10:.2f}" y1="{ypix(mn):.2f}" x2="{cx + 10:.2f}" '
            f'y2="{ypix(mn):.2f}" stroke="#333333"/>',
            f'<rect x="{cx - half:.2f}" y="{ypix(q3):.2f}" width="{2 * half}" '
            f'height="{max(ypix(q1) - ypix(q3), 0.5):.2f}" fill="#8da0e8" '
            'stroke="#31369f"/>',
            f'<line x1="{cx - half:.2f}" y1="{ypix(med):.2f}" x2="{cx + half:.2f}" '
            f'y2="{ypix(med):.2f}" stroke="#101266" stroke-width="2"/>',
            f'<text x="{cx:.2f}" y="{top + plot_h + 20}" text-anchor="middle" '
            f'font-size="11">{_esc(label)}</text>',
        ]
    return _document(width, height, body, config_hash)
