"""Final filtering of grown seeds by photometric agreement with the template."""
from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np

from ..core import Detection, KeyPointSet, Seed
from ..errors import DegenerateInputError, ValidationError
from ..geom import convex_hull, polygons_intersect
from .raster import Raster, histogram_match, photometric_difference, warp
from .tps import tps_fit

log = logging.getLogger(__name__)


def rectify_seed(scene_image: Raster, template_image: Raster, seed: Seed, template: KeyPointSet,
                 scene: KeyPointSet, tps_lambda: float = 0.0) -> Raster:
    """Scene image resampled into the template frame through the seed's spline.

    The spline is fitted from template to scene positions so it can drive an
    inverse-mapping warp (every template pixel looks up its scene source).
    """
    t_pts = np.array([template.position(t) for t in seed.template_ids])
    s_pts = np.array([scene.position(s) for s in seed.scene_ids])
    spline = tps_fit(t_pts, s_pts, tps_lambda)
    return warp(scene_image, spline, (template_image.width, template_image.height))


def score_seed(template_image: Raster, scene_image: Raster, seed: Seed, template: KeyPointSet,
               scene: KeyPointSet, template_hull, tps_lambda: float = 0.0) -> int:
    try:
        rectified = rectify_seed(scene_image, template_image, seed, template, scene, tps_lambda)
    except DegenerateInputError:
        return 255
    matched = histogram_match(rectified, template_image)
    _, j = photometric_difference(matched, template_image, template_hull)
    return j


def suppress_overlaps(hulls: Sequence, order: Sequence[int]) -> list[int]:
    """Walk seeds best-first; keep one unless its scene hull overlaps a kept one."""
    kept: list[int] = []
    for i in order:
        if not any(polygons_intersect(hulls[i], hulls[k]) for k in kept):
            kept.append(i)
        else:
            log.info("photometric filter dropped seed %d (overlaps a better seed)", i)
    return sorted(kept)


def photometric_filtering(template_image: Optional[Raster], scene_image: Optional[Raster],
                          seeds: Sequence[Seed], template: KeyPointSet, scene: KeyPointSet,
                          tps_lambda: float = 0.0) -> list[Detection]:
    """Keep the best seed among those whose scene hulls overlap.

    With both images "best" is the lowest difference median j; without
    images it is the seed with the most matches.
    """
    if (template_image is None) != (scene_image is None):
        raise ValidationError("photometric filtering needs both images or neither")
    image_mode = template_image is not None
    kept_seeds, t_hulls, s_hulls = [], [], []
    for seed in seeds:
        try:
            th = convex_hull([template.position(t) for t in seed.template_ids])
            sh = convex_hull([scene.position(s) for s in seed.scene_ids])
        except DegenerateInputError:
            continue
        kept_seeds.append(seed)
        t_hulls.append(tuple(th))
        s_hulls.append(tuple(sh))
    if not kept_seeds:
        return []
    if image_mode:
        scores = [score_seed(template_image, scene_image, s, template, scene, th, tps_lambda)
                  for s, th in zip(kept_seeds, t_hulls)]
    else:
        scores = [None] * len(kept_seeds)
    idx = range(len(kept_seeds))
    if image_mode:
        order = sorted(idx, key=lambda i: (scores[i], -len(kept_seeds[i]), i))
    else:
        order = sorted(idx, key=lambda i: (-len(kept_seeds[i]), i))
    winners = suppress_overlaps(s_hulls, order)
    return [Detection(kept_seeds[i], t_hulls[i], s_hulls[i], scores[i]) for i in sorted(winners)]
