from .kdtree import KdPartition, kd_partition
from .polygon import (
    SideClass,
    boundary_ring,
    classify_vertex_vs_hull_side,
    clip_polygon,
    convex_hull,
    hull_ids,
    intersection_area,
    points_in_polygon,
    polygon_area,
    polygons_intersect,
    rasterize_polygon,
    signed_area,
)
from .predicates import EPS, incircle, orient2d, orientation_sign
from .transforms import AffineMap, Homography, affine_batch, affine_from_triangles
from .triangulation import TriangulationGraph, constrained_delaunay, delaunay

__all__ = [
    "AffineMap", "EPS", "Homography", "KdPartition", "SideClass", "TriangulationGraph",
    "affine_batch", "affine_from_triangles", "boundary_ring", "classify_vertex_vs_hull_side",
    "clip_polygon", "constrained_delaunay", "convex_hull", "delaunay", "hull_ids", "incircle",
    "intersection_area", "kd_partition", "orient2d", "orientation_sign", "points_in_polygon",
    "polygon_area", "polygons_intersect", "rasterize_polygon", "signed_area",
]
