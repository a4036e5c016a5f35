"""Deterministic SVG drawings of tilings and configurations."""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

from .graph import AdjacencyGraph

STATE_COLOURS = ("#f4f1e8", "#c0392b")
FAMILY_COLOURS = ("#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1", "#76b7b2", "#edc948", "#9c755f")
HIGHLIGHT = "#1f1f7a"


@dataclass
class RenderStyle:
    fill: str = "state"  # state | cluster | family
    stroke_width: float = 0.03
    highlight: frozenset = field(default_factory=frozenset)
    scale: float = 20.0
    margin: float = 0.5


def tile_polygons(graph: AdjacencyGraph) -> list[np.ndarray]:
    if graph.is_rhombus:
        return list(graph.patch.polygons())
    if graph.polygons is None:
        raise ValueError("graph has no polygons to draw")
    return [np.asarray(p, dtype=float) for p in graph.polygons]


def _cluster_colour(k: int) -> str:
    # golden-angle hue walk, fixed lightness
    h = (k * 137.508) % 360
    return f"hsl({h:.1f},55%,60%)"


def _fills(graph: AdjacencyGraph, state, style: RenderStyle) -> list[str]:
    n = len(graph)
    if style.fill == "family":
        if not graph.is_rhombus:
            return [STATE_COLOURS[0]] * n
        fam = graph.patch.families
        return [FAMILY_COLOURS[(int(a) * 3 + int(b)) % len(FAMILY_COLOURS)] for a, b in fam]
    if state is None:
        return [STATE_COLOURS[0]] * n
    state = np.asarray(state)
    if style.fill == "cluster":
        from scipy.sparse.csgraph import connected_components

        on = np.flatnonzero(state)
        out = [STATE_COLOURS[0]] * n
        if on.size:
            _, lab = connected_components(graph.csr_matrix[on][:, on], directed=False)
            for t, c in zip(on.tolist(), lab.tolist()):
                out[t] = _cluster_colour(c)
        return out
    return [STATE_COLOURS[int(s > 0)] for s in state]


def render_svg(graph: AdjacencyGraph, state=None, style: RenderStyle | None = None, title: str = "") -> str:
    """SVG text; identical inputs give identical bytes (coordinates fixed to 3 decimals)."""
    style = style or RenderStyle()
    polys = tile_polygons(graph)
    fills = _fills(graph, state, style)
    pts = np.concatenate(polys) if polys else np.zeros((1, 2))
    lo = pts.min(axis=0) - style.margin
    hi = pts.max(axis=0) + style.margin
    s = style.scale
    w, h = (hi - lo) * s
    lines = ['<?xml version="1.0" encoding="UTF-8"?>',
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.3f}" height="{h:.3f}" '
             f'viewBox="0 0 {w:.3f} {h:.3f}">']
    if title:
        lines.append(f"<title>{escape(title)}</title>")
    lines.append(f'<g stroke="#333333" stroke-width="{style.stroke_width * s:.3f}" stroke-linejoin="round">')
    for k, (poly, fill) in enumerate(zip(polys, fills)):
        xy = (poly - lo) * s
        xy[:, 1] = h - xy[:, 1]
        path = " ".join(f"{x:.3f},{y:.3f}" for x, y in xy)
        extra = f' stroke="{HIGHLIGHT}" stroke-width="{3 * style.stroke_width * s:.3f}"' if k in style.highlight else ""
        lines.append(f'<polygon id="t{k}" points="{path}" fill="{fill}"{extra}/>')
    lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
