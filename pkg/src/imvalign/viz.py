"""Alignment heatmaps as standalone SVG, with a plain-text matrix sidecar."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

X_LABEL = "input frame step"
Y_LABEL = "output step"

CELL = 12
MARGIN = 48
GAP = 36


def _gray(w: float) -> str:
    level = int(round(255 * (1.0 - min(max(w, 0.0), 1.0))))
    return f"#{level:02x}{level:02x}{level:02x}"


def _panel(matrix: np.ndarray, x0: int, y0: int, title: str) -> list[str]:
    """One heatmap: rows are output steps, columns are input frames."""
    rows, cols = matrix.shape
    peak = float(matrix.max()) if matrix.size and matrix.max() > 0 else 1.0
    out = [f'<g class="panel" data-title="{escape(title)}">',
           f'<text x="{x0 + cols * CELL / 2:.1f}" y="{y0 - 8}" text-anchor="middle" font-size="12">{escape(title)}</text>']
    for i in range(rows):
        for j in range(cols):
            w = float(matrix[i, j])
            out.append(f'<rect x="{x0 + j * CELL}" y="{y0 + i * CELL}" width="{CELL}" height="{CELL}" '
                       f'fill="{_gray(w / peak)}" data-w="{w:.6g}"/>')
    out.append(f'<rect x="{x0}" y="{y0}" width="{cols * CELL}" height="{rows * CELL}" fill="none" stroke="black"/>')
    out.append(f'<text x="{x0 + cols * CELL / 2:.1f}" y="{y0 + rows * CELL + 20}" text-anchor="middle" '
               f'font-size="11">{X_LABEL}</text>')
    cy = y0 + rows * CELL / 2
    out.append(f'<text x="{x0 - 14}" y="{cy:.1f}" text-anchor="middle" font-size="11" '
               f'transform="rotate(-90 {x0 - 14} {cy:.1f})">{Y_LABEL}</text>')
    out.append("</g>")
    return out


def heatmap_svg(panels: Sequence[tuple[str, np.ndarray]]) -> str:
    """Render one or more [L, T] matrices side by side."""
    if not panels:
        raise ValueError("need at least one panel")
    widths = [m.shape[1] * CELL for _, m in panels]
    height = max(m.shape[0] for _, m in panels) * CELL + 2 * MARGIN
    width = sum(widths) + GAP * (len(panels) - 1) + 2 * MARGIN
    body = []
    x = MARGIN
    for (title, m), w in zip(panels, widths):
        body += _panel(np.asarray(m, dtype=float), x, MARGIN, title)
        x += w + GAP
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def format_matrix(title: str, matrix: np.ndarray) -> str:
    """``# title rows cols`` followed by one whitespace-separated row per output step."""
    m = np.asarray(matrix, dtype=float)
    lines = [f"# {title} {m.shape[0]} {m.shape[1]}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in m]
    return "\n".join(lines) + "\n"


def parse_matrices(text: str) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        if not lines[i].startswith("# "):
            raise ValueError(f"line {i + 1}: expected a '# title rows cols' header")
        title, rows, cols = lines[i][2:].rsplit(" ", 2)
        rows, cols = int(rows), int(cols)
        block = [[float(v) for v in ln.split()] for ln in lines[i + 1:i + 1 + rows]]
        m = np.array(block, dtype=float).reshape(rows, cols)
        out[title] = m
        i += rows + 1
    return out


def write_alignment_views(path, panels: Sequence[tuple[str, np.ndarray]]) -> tuple[Path, Path]:
    """Write ``path`` (SVG) and ``path`` with a ``.txt`` suffix holding the raw matrices."""
    svg_path = Path(path)
    txt_path = svg_path.with_suffix(".txt")
    svg_path.write_text(heatmap_svg(panels), encoding="utf-8")
    txt_path.write_text("".join(format_matrix(t, m) for t, m in panels), encoding="utf-8")
    return svg_path, txt_path
