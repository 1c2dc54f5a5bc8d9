"""Deterministic SVG artifacts: labeled scatter plots and dendrograms.

Output bytes depend only on the inputs and the plot spec; there are no
timestamps and no randomness, so artifacts can be compared byte-for-byte
across re-renders.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

# 20 distinguishable colors, cycled when there are more labels
PALETTE20 = [
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c",
    "#98df8a", "#d62728", "#ff9896", "#9467bd", "#c5b0d5",
    "#8c564b", "#c49c94", "#e377c2", "#f7b6d2", "#7f7f7f",
    "#c7c7c7", "#bcbd22", "#dbdb8d", "#17becf", "#9edae5",
]


@dataclass
class PlotSpec:
    width: int = 640
    height: int = 480
    palette: list = field(default_factory=lambda: list(PALETTE20))
    point_radius: float = 3.0
    legend: bool = True
    margin: float = 40.0

    def validate(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("width and height must be positive")
        if not self.palette:
            raise ValueError("palette must be non-empty")
        return self


def _axis_range(values):
    """(lo, hi) with 5% padding; a unit box around degenerate ranges."""
    lo = float(values.min())
    hi = float(values.max())
    if hi == lo:
        return lo - 0.5, lo + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _fmt(v):
    return f"{v:.2f}"


def render_scatter(embedding, labels=None, spec=None):
    """One circle per point, colored by label, with a legend."""
    spec = (spec or PlotSpec()).validate()
    emb = np.asarray(embedding, dtype=float)
    if emb.ndim != 2 or emb.shape[1] != 2:
        raise ValueError("embedding must be an (n, 2) matrix")
    finite = np.isfinite(emb).all(axis=1)
    if not finite.all():
        raise ValueError(f"non-finite coordinate in row {int(np.argmin(finite))}")
    n = emb.shape[0]
    if labels is None:
        labels = ["points"] * n
    labels = [str(l) for l in labels]
    if len(labels) != n:
        raise ValueError("labels length must match row count")
    order = list(dict.fromkeys(labels))
    color = {lab: spec.palette[i % len(spec.palette)] for i, lab in enumerate(order)}

    x_lo, x_hi = _axis_range(emb[:, 0])
    y_lo, y_hi = _axis_range(emb[:, 1])
    m = spec.margin
    sx = (spec.width - 2 * m) / (x_hi - x_lo)
    sy = (spec.height - 2 * m) / (y_hi - y_lo)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{spec.width}" '
        f'height="{spec.height}" viewBox="0 0 {spec.width} {spec.height}">',
        f'<rect width="{spec.width}" height="{spec.height}" fill="white"/>',
    ]
    for i in range(n):
        px = m + (emb[i, 0] - x_lo) * sx
        py = spec.height - m - (emb[i, 1] - y_lo) * sy
        parts.append(
            f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="{spec.point_radius:g}" '
            f'fill="{color[labels[i]]}" fill-opacity="0.8"/>')
    if spec.legend and order != ["points"]:
        for i, lab in enumerate(order):
            ly = m / 2 + 14 * i
            parts.append(
                f'<rect x="{_fmt(spec.width - m - 110)}" y="{_fmt(ly)}" '
                f'width="10" height="10" fill="{color[lab]}"/>')
            parts.append(
                f'<text x="{_fmt(spec.width - m - 96)}" y="{_fmt(ly + 9)}" '
                f'font-family="sans-serif" font-size="11">{escape(lab)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _leaf_positions(tree):
    """Leaf ids in left-to-right display order from the root downward."""
    n = len(tree.leaves)
    children = {n + m: (a, b) for m, (a, b, _h, _s) in enumerate(tree.merges)}

    order = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if node < n:
            order.append(node)
        else:
            a, b = children[node]
            stack.append(b)  # popped after a: left child stays left
            stack.append(a)
    return order


def render_dendrogram(tree, spec=None):
    """Rectangular dendrogram: leaves along x, merge heights along y."""
    spec = (spec or PlotSpec()).validate()
    n = len(tree.leaves)
    if len(tree.merges) != n - 1:
        raise ValueError(f"tree with {n} leaves needs {n - 1} merges")
    order = _leaf_positions(tree)
    slot = {leaf: i for i, leaf in enumerate(order)}
    m = spec.margin
    span = spec.width - 2 * m
    step = span / max(n - 1, 1)

    max_h = max(h for _a, _b, h, _s in tree.merges)
    if max_h <= 0:
        max_h = 1.0
    baseline = spec.height - m
    scale = (spec.height - 2 * m) / max_h

    # x position and current height of each already-drawn node
    xpos = {leaf: m + slot[leaf] * step for leaf in range(n)}
    ypos = {leaf: baseline for leaf in range(n)}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{spec.width}" '
        f'height="{spec.height}" viewBox="0 0 {spec.width} {spec.height}">',
        f'<rect width="{spec.width}" height="{spec.height}" fill="white"/>',
    ]
    for i, (a, b, h, _s) in enumerate(tree.merges):
        y = baseline - h * scale
        xa, xb = xpos[a], xpos[b]
        parts.append(
            f'<path d="M {_fmt(xa)} {_fmt(ypos[a])} V {_fmt(y)} '
            f'H {_fmt(xb)} V {_fmt(ypos[b])}" stroke="#333333" '
            f'fill="none" stroke-width="1.5"/>')
        xpos[n + i] = (xa + xb) / 2.0
        ypos[n + i] = y
    for leaf in range(n):
        parts.append(
            f'<text x="{_fmt(xpos[leaf])}" y="{_fmt(baseline + 14)}" '
            f'font-family="sans-serif" font-size="11" text-anchor="middle">'
            f'{escape(str(tree.leaves[leaf]))}</text>')
    # height axis: baseline and the top merge height
    parts.append(
        f'<text x="{_fmt(m - 6)}" y="{_fmt(baseline)}" font-family="sans-serif" '
        f'font-size="10" text-anchor="end">0</text>')
    parts.append(
        f'<text x="{_fmt(m - 6)}" y="{_fmt(baseline - max_h * scale)}" '
        f'font-family="sans-serif" font-size="10" text-anchor="end">{max_h:.4g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
