"""Static SVG overlays: triangulation meshes, hulls and correspondences.

The template is drawn on the left and the scene on the right. For each
detection the Delaunay mesh of its template keypoints is drawn once in the
template and once more in the scene through the matches (the same edges
between the corresponding scene keypoints), so deformation is visible as
distortion of an otherwise identical mesh.
"""
from __future__ import annotations

from typing import Optional, Sequence
from xml.sax.saxutils import quoteattr

import numpy as np

from .core import Detection, KeyPointSet
from .errors import DegenerateInputError
from .geom import TriangulationGraph, delaunay

GAP = 40.0
COLOURS = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _num(v: float) -> str:
    s = f"{float(v):.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _extent(kps: KeyPointSet, size) -> tuple[float, float]:
    if size is not None:
        return float(size[0]), float(size[1])
    if len(kps) == 0:
        return 1.0, 1.0
    return float(kps.xy[:, 0].max()) + 1.0, float(kps.xy[:, 1].max()) + 1.0


def _edges_path(edges, pos, dx=0.0) -> str:
    parts = []
    for a, b in sorted(edges):
        (x0, y0), (x1, y1) = pos[a], pos[b]
        parts.append(f"M{_num(x0 + dx)} {_num(y0)}L{_num(x1 + dx)} {_num(y1)}")
    return "".join(parts)


def _points(poly, dx=0.0) -> str:
    return " ".join(f"{_num(x + dx)},{_num(y)}" for x, y in poly)


def seed_mesh(detection: Detection, template: KeyPointSet) -> Optional[TriangulationGraph]:
    """Delaunay mesh over the detection's template keypoints (one per distinct position)."""
    pos = {}
    taken = set()
    for t in detection.seed.template_ids:
        p = template.position(t)
        if p not in taken:
            taken.add(p)
            pos[t] = p
    try:
        return delaunay(pos)
    except DegenerateInputError:
        return None


def overlay_svg(template: KeyPointSet, scene: KeyPointSet, detections: Sequence[Detection],
                template_size=None, scene_size=None) -> str:
    tw, th = _extent(template, template_size)
    sw, sh = _extent(scene, scene_size)
    dx = tw + GAP
    width, height = dx + sw, max(th, sh)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(width)}" height="{_num(height)}" '
        f'viewBox="0 0 {_num(width)} {_num(height)}">',
        "<style>path{fill:none;stroke-width:0.6}polygon{fill:none;stroke-width:1.5}"
        "line.corr{stroke-width:0.4;stroke-opacity:0.6}circle{fill:#777}</style>",
        f'<rect class="frame" x="0" y="0" width="{_num(tw)}" height="{_num(th)}" fill="none" stroke="#999"/>',
        f'<rect class="frame" x="{_num(dx)}" y="0" width="{_num(sw)}" height="{_num(sh)}" fill="none" stroke="#999"/>',
        '<g class="keypoints">',
    ]
    for x, y in template.xy:
        out.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="1"/>')
    for x, y in scene.xy:
        out.append(f'<circle cx="{_num(x + dx)}" cy="{_num(y)}" r="1"/>')
    out.append("</g>")
    for k, det in enumerate(detections):
        colour = COLOURS[k % len(COLOURS)]
        label = quoteattr(",".join(det.seed.provenance) or f"detection{k}")
        out.append(f'<g class="detection" id="det{k}" data-seeds={label} stroke="{colour}">')
        mesh = seed_mesh(det, template)
        if mesh is not None:
            seed_map = det.seed.scene_of()
            t_pos = {i: template.position(i) for i in mesh.vertices}
            s_pos = {i: scene.position(seed_map[i]) for i in mesh.vertices}
            out.append(f'<path class="mesh-template" d="{_edges_path(mesh.edges, t_pos)}"/>')
            out.append(f'<path class="mesh-scene" d="{_edges_path(mesh.edges, s_pos, dx)}"/>')
        if det.template_hull:
            out.append(f'<polygon class="hull-template" points="{_points(det.template_hull)}"/>')
        if det.scene_hull:
            out.append(f'<polygon class="hull-scene" points="{_points(det.scene_hull, dx)}"/>')
        for m in det.seed.matches:
            x0, y0 = template.position(m.template_id)
            x1, y1 = scene.position(m.scene_id)
            out.append(
                f'<line class="corr" x1="{_num(x0)}" y1="{_num(y0)}" x2="{_num(x1 + dx)}" y2="{_num(y1)}"/>'
            )
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def mesh_svg(graph: TriangulationGraph, size=None) -> str:
    """A single triangulation, e.g. for the dump-mesh command."""
    pos = graph.vertices
    xy = np.array(list(pos.values())) if pos else np.zeros((0, 2))
    if size is None:
        size = (float(xy[:, 0].max()) + 1.0, float(xy[:, 1].max()) + 1.0) if len(xy) else (1.0, 1.0)
    w, h = size
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(w)}" height="{_num(h)}" '
        f'viewBox="0 0 {_num(w)} {_num(h)}">',
        f'<path class="mesh" d="{_edges_path(graph.edges, pos)}" fill="none" stroke="#333" stroke-width="0.6"/>',
    ]
    constrained = [e for e in sorted(graph.edges) if e in graph.constrained_edges]
    if constrained:
        out.append(f'<path class="constrained" d="{_edges_path(constrained, pos)}" fill="none" '
                   'stroke="#d62728" stroke-width="1.2"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
