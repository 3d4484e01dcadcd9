"""Seed-growing detection engine.

A detection round picks one well-scored matching triangle per kd leaf of the
scene, grows each of them across the sides of its template hull, consumes the
matches the round used, and repeats until no seed grows properly. Surviving
seeds are merged and handed to the photometric filter.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial import Delaunay, QhullError

from . import checks
from .core import KeyPointSet, Match, Seed, match_sets
from .errors import DegenerateInputError, ValidationError
from .geom import (
    EPS,
    TriangulationGraph,
    affine_batch,
    boundary_ring,
    constrained_delaunay,
    convex_hull,
    delaunay,
    kd_partition,
    polygons_intersect,
)
from .geom.predicates import orient2d, orient2d_many
from .scores import RCS_MU_CORRECTED, score_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GrowthConfig:
    ratio_threshold: float = 0.8
    ccs_threshold: float = 0.6
    rcs_threshold: float = 0.6
    coherence_threshold: float = 0.7
    kd_leaves: int = 5
    max_candidates_per_template_triplet: int = 32
    expansion_neighbor_depth: int = 1
    min_seed_size: int = 6
    rcs_mu: float = RCS_MU_CORRECTED
    tps_lambda: float = 0.0
    max_rounds: int = 50

    def __post_init__(self):
        for name in ("ccs_threshold", "rcs_threshold", "coherence_threshold"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValidationError(f"{name} must lie in (0, 1), got {v}")
        if not 0 < self.ratio_threshold <= 1:
            raise ValidationError(f"ratio_threshold must lie in (0, 1], got {self.ratio_threshold}")
        if self.kd_leaves < 1:
            raise ValidationError(f"kd_leaves must be >= 1, got {self.kd_leaves}")
        if self.max_candidates_per_template_triplet < 1:
            raise ValidationError("max_candidates_per_template_triplet must be >= 1")
        if self.expansion_neighbor_depth < 0:
            raise ValidationError("expansion_neighbor_depth must be >= 0")
        if self.min_seed_size < 3:
            raise ValidationError("min_seed_size must be >= 3")

    @classmethod
    def from_mapping(cls, values: dict) -> "GrowthConfig":
        """Build from string values (config file or CLI), ignoring unknown keys."""
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, raw in values.items():
            if key not in kinds:
                continue
            try:
                kw[key] = int(raw) if kinds[key] in ("int", int) else float(raw)
            except ValueError:
                raise ValidationError(f"config value {key}={raw!r} is not a number") from None
        return cls(**kw)

    def updated(self, **overrides) -> "GrowthConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


@dataclass
class SeedPool:
    """Bookkeeping for one detection run."""

    active: list[Seed] = field(default_factory=list)
    expanded: list[Seed] = field(default_factory=list)
    consumed: set[Match] = field(default_factory=set)
    initial_counts: list[int] = field(default_factory=list)

    def check_invariants(self) -> None:
        seen: set[Match] = set()
        for s in self.expanded:
            ms = set(s.matches)
            if ms & seen:
                raise AssertionError("expanded seeds share a match")
            seen |= ms


# -- candidate generation ------------------------------------------------------

def _collinear(pos, a, b, c) -> bool:
    return abs(orient2d(pos[a], pos[b], pos[c])) <= EPS


def triangle_expansions(tri: TriangulationGraph, t) -> set[tuple[int, int, int]]:
    """Triangle ``t`` and each variant with one vertex swapped for one of its neighbours."""
    pos = tri.vertices
    out = {tuple(sorted(t))}
    for k in range(3):
        x, y, z = t[k], t[(k + 1) % 3], t[(k + 2) % 3]
        for n in tri.neighbors(x):
            if n == y or n == z or _collinear(pos, n, y, z):
                continue
            out.add(tuple(sorted((n, y, z))))
    return out


def redundant_triplets(tri: TriangulationGraph) -> set[tuple[int, int, int]]:
    out = set()
    for t in tri.triangles:
        out |= triangle_expansions(tri, t)
    return out


def _matches_by_template(matches: Iterable[Match]) -> dict[int, list[Match]]:
    by_t: dict[int, list[Match]] = {}
    for m in matches:
        by_t.setdefault(m.template_id, []).append(m)
    for lst in by_t.values():
        lst.sort(key=lambda m: (m.distance, m.scene_id))
    return by_t


def _compose(triple, by_t, cap) -> list[tuple[Match, Match, Match]]:
    lists = [by_t.get(t, ()) for t in triple]
    combos = []
    for combo in itertools.product(*lists):
        s = {m.scene_id for m in combo}
        if len(s) == 3:
            combos.append(combo)
    if len(combos) > cap:
        combos.sort(key=lambda c: (math.fsum(m.distance for m in c), tuple(m.scene_id for m in c)))
        combos = combos[:cap]
    return combos


def compose_matching_triangles(triple, matches: Iterable[Match], cap: int = 32) -> list[Seed]:
    """Matching triangles over a template triple, at most ``cap`` of them."""
    by_t = _matches_by_template(matches)
    return [Seed(c) for c in _compose(tuple(triple), by_t, cap)]


class _Arrays:
    """Row lookups from keypoint ids into the stacked keypoint arrays."""

    def __init__(self, template: KeyPointSet, scene: KeyPointSet):
        self.template = template
        self.scene = scene
        self.t_row = {int(i): k for k, i in enumerate(template.ids)}
        self.s_row = {int(i): k for k, i in enumerate(scene.ids)}

    def gather(self, t_ids: np.ndarray, s_ids: np.ndarray, dist: np.ndarray) -> dict:
        tr = np.fromiter((self.t_row[int(i)] for i in t_ids.ravel()), np.int64, t_ids.size).reshape(t_ids.shape)
        sr = np.fromiter((self.s_row[int(i)] for i in s_ids.ravel()), np.int64, s_ids.size).reshape(s_ids.shape)
        t, s = self.template, self.scene
        return dict(
            t_xy=t.xy[tr], s_xy=s.xy[sr],
            t_theta=t.orientations[tr], s_theta=s.orientations[sr],
            t_scale=t.scales[tr], s_scale=s.scales[sr],
            dist=dist,
        )


def _unique_positions(template: KeyPointSet, ids: Iterable[int]) -> dict[int, tuple[float, float]]:
    """Positions of ``ids``; when several share a position the lowest id represents it."""
    pos = {}
    taken = set()
    for i in sorted(ids):
        p = template.position(i)
        if p in taken:
            continue
        taken.add(p)
        pos[i] = p
    return pos


# -- initial selection ---------------------------------------------------------

def _tie_key(score, combo):
    return (-score, math.fsum(m.distance for m in combo),
            tuple(sorted(m.template_id for m in combo)), tuple(m.scene_id for m in combo))


def _score_combos(arrays: _Arrays, combos, reduced=False, mu=RCS_MU_CORRECTED) -> np.ndarray:
    if not combos:
        return np.zeros(0)
    t_ids = np.array([[m.template_id for m in c] for c in combos], dtype=np.int64)
    s_ids = np.array([[m.scene_id for m in c] for c in combos], dtype=np.int64)
    dist = np.array([[m.distance for m in c] for c in combos], dtype=np.float64)
    return score_batch(**arrays.gather(t_ids, s_ids, dist), reduced=reduced, mu=mu)


def initial_seed_selection(template: KeyPointSet, scene: KeyPointSet, matches: Sequence[Match],
                           cfg: GrowthConfig = GrowthConfig(), arrays: Optional[_Arrays] = None) -> list[Seed]:
    """Best matching triangle per kd leaf of the scene, ranked by ccs."""
    matches = list(matches)
    if not matches:
        return []
    arrays = arrays or _Arrays(template, scene)
    pos = _unique_positions(template, {m.template_id for m in matches})
    if len(pos) < 3:
        return []
    try:
        tri = delaunay(pos)
    except DegenerateInputError:
        return []
    by_t = _matches_by_template(m for m in matches if m.template_id in pos)
    combos = []
    for triple in sorted(redundant_triplets(tri)):
        combos.extend(_compose(triple, by_t, cfg.max_candidates_per_template_triplet))
    if not combos:
        return []
    scores = _score_combos(arrays, combos)
    keep = np.flatnonzero(scores >= cfg.ccs_threshold)
    log.debug("initial selection: %d candidates, %d above ccs threshold", len(combos), len(keep))
    if len(keep) == 0:
        return []
    scene_ids = sorted({m.scene_id for m in matches})
    active_scene = scene.subset(scene_ids)
    part = kd_partition(active_scene, min(cfg.kd_leaves, len(active_scene)))
    best: dict[int, tuple] = {}
    for k in keep:
        combo = combos[k]
        leaf = part.leaf_of(min(m.scene_id for m in combo))
        key = _tie_key(float(scores[k]), combo)
        if leaf not in best or key < best[leaf][0]:
            best[leaf] = (key, combo)
    return [Seed(best[leaf][1]) for leaf in sorted(best)]


# -- expansion -----------------------------------------------------------------

def _strictly_outside(ring_xy: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Points strictly outside a CCW convex ring."""
    if len(pts) == 0:
        return np.zeros(0, dtype=bool)
    a = ring_xy
    b = np.roll(ring_xy, -1, axis=0)
    ex = b[:, 0] - a[:, 0]
    ey = b[:, 1] - a[:, 1]
    d = ex[None, :] * (pts[:, 1:2] - a[None, :, 1]) - ey[None, :] * (pts[:, 0:1] - a[None, :, 0])
    return (d < -EPS).any(axis=1)


def _neighbourhood(tri: TriangulationGraph, w: int, depth: int) -> set[int]:
    seen = {w}
    frontier = {w}
    for _ in range(depth):
        nxt = set()
        for v in frontier:
            nxt |= tri.neighbors(v)
        frontier = nxt - seen
        seen |= nxt
    return seen


def _swallowed(ring_xy: np.ndarray, new_xy: np.ndarray, pts: np.ndarray) -> int:
    """How many of ``pts`` (all outside the hull) end up inside or on the hull grown by ``new_xy``."""
    if len(pts) == 0:
        return 0
    a = ring_xy
    b = np.roll(ring_xy, -1, axis=0)
    vis = ((b[:, 0] - a[:, 0]) * (new_xy[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (new_xy[0] - a[:, 0])) < -EPS
    a, b = a[vis], b[vis]
    if len(a) == 0:
        return 0

    def side(p, q):
        return (q[None, :, 0] - p[None, :, 0]) * (pts[:, 1:2] - p[None, :, 1]) - \
            (q[None, :, 1] - p[None, :, 1]) * (pts[:, 0:1] - p[None, :, 0])

    n = np.broadcast_to(new_xy, a.shape)
    # the triangles (b, a, n) are CCW since n lies right of a->b
    inside = (side(b, a) >= -EPS) & (side(a, n) >= -EPS) & (side(n, b) >= -EPS)
    return int(inside.any(axis=1).sum())


@dataclass
class StepTrace:
    """Diagnostics of one expansion step (used by tests and logging)."""

    candidates: int = 0
    after_intersection: int = 0
    after_coherence: int = 0
    after_rcs: int = 0
    added: Optional[Match] = None


def _expansion_step(seed: Seed, arrays: _Arrays, by_t: dict, pos_all: dict, cfg: GrowthConfig,
                    trace: Optional[StepTrace] = None) -> Optional[Seed]:
    template, scene = arrays.template, arrays.scene
    seed_map = seed.scene_of()
    used_scene = set(seed_map.values())
    members = {t: template.position(t) for t in seed_map}
    ring = boundary_ring(members)
    ring_xy = np.array([members[i] for i in ring])
    # non-members on or inside the hull are dropped from the triangulation
    others = [i for i in pos_all if i not in seed_map]
    other_xy = np.array([pos_all[i] for i in others]).reshape(-1, 2)
    outside = _strictly_outside(ring_xy, other_xy)
    verts = dict(members)
    member_positions = set(members.values())
    for i, keep in zip(others, outside):
        if keep and pos_all[i] not in member_positions:
            verts[i] = pos_all[i]
    sides = list(zip(ring, ring[1:] + ring[:1]))
    cdt = constrained_delaunay(verts, sides)

    ring_s = [scene.position(seed_map[i]) for i in ring]
    wind_s = checks.polygon_winding(ring_s)

    cand_t = []  # (u, v, n)
    cand_m = []  # (match_u, match_v, match_n)
    seen = set()
    for u, v in sides:
        w = cdt.opposite(v, u)
        if w is None:
            continue
        mu = Match(u, seed_map[u], _distance_of(seed, u))
        mv = Match(v, seed_map[v], _distance_of(seed, v))
        for n in sorted(_neighbourhood(cdt, w, cfg.expansion_neighbor_depth)):
            if n in seed_map or n == u or n == v:
                continue
            for mn in by_t.get(n, ()):
                if mn.scene_id in used_scene:
                    continue
                key = (u, v, n, mn.scene_id)
                if key in seen:
                    continue
                seen.add(key)
                cand_t.append((u, v, n))
                cand_m.append((mu, mv, mn))
    if trace is not None:
        trace.candidates = len(cand_t)
    if not cand_t:
        return None

    t_ids = np.array(cand_t, dtype=np.int64)
    s_ids = np.array([[m.scene_id for m in c] for c in cand_m], dtype=np.int64)
    dist = np.array([[m.distance for m in c] for c in cand_m], dtype=np.float64)
    data = arrays.gather(t_ids, s_ids, dist)

    # non-intersection: the new vertex must be beyond the shared side in T and in S
    txy, sxy = data["t_xy"], data["s_xy"]
    ok_t = orient2d_many(txy[:, 0], txy[:, 1], txy[:, 2]) < -EPS
    ok_s = orient2d_many(sxy[:, 0], sxy[:, 1], sxy[:, 2]) * wind_s < -EPS
    alive = np.flatnonzero(ok_t & ok_s)
    if trace is not None:
        trace.after_intersection = len(alive)
    if len(alive) == 0:
        return None

    # local coherence against seed members adjacent to the candidate
    owner, g_t, g_s = [], [], []
    for slot, k in enumerate(alive):
        u, v, n = cand_t[k]
        near = (cdt.neighbors(u) | cdt.neighbors(v) | cdt.neighbors(n)) - {u, v}
        for g in sorted(near):
            if g in seed_map:
                owner.append(slot)
                g_t.append(members[g])
                g_s.append(scene.position(seed_map[g]))
    aff = affine_batch(txy[alive], sxy[alive])
    _, coherent = checks.batch_coherence(
        aff, np.array(owner, dtype=np.int64), np.array(g_t).reshape(-1, 2), np.array(g_s).reshape(-1, 2),
        len(alive), cfg.coherence_threshold,
    )
    alive = alive[coherent]
    if trace is not None:
        trace.after_coherence = len(alive)
    if len(alive) == 0:
        return None

    sub = {k: v[alive] for k, v in data.items()}
    rcs = score_batch(**sub, reduced=True, mu=cfg.rcs_mu)
    passing = np.flatnonzero(rcs >= cfg.rcs_threshold)
    if trace is not None:
        trace.after_rcs = len(passing)
    if len(passing) == 0:
        return None
    # among equal scores prefer the growth that engulfs fewest unmatched-so-far keypoints,
    # since anything that falls inside the hull can never join the seed afterwards
    top = float(rcs[passing].max())
    outside_ids = [i for i in verts if i not in seed_map]
    outside_xy = np.array([verts[i] for i in outside_ids]).reshape(-1, 2)

    def key(j):
        k = alive[j]
        n = cand_t[k][2]
        score = float(rcs[j])
        cost = 0
        if score == top:
            mask = np.array([i != n for i in outside_ids], dtype=bool)
            cost = _swallowed(ring_xy, np.asarray(verts[n]), outside_xy[mask])
        return (-score, cost) + _tie_key(score, cand_m[k])[1:]

    best = min(passing, key=key)
    new = cand_m[alive[best]][2]
    if trace is not None:
        trace.added = new
    return seed.with_matches([new])


def _distance_of(seed: Seed, t_id: int) -> float:
    for m in seed.matches:
        if m.template_id == t_id:
            return m.distance
    raise KeyError(t_id)


def _prepare(template, scene, matches, seed):
    avail = {m for m in matches}
    avail |= set(seed.matches)
    pos_all = _unique_positions(template, {m.template_id for m in avail})
    for t in seed.template_ids:
        pos_all[t] = template.position(t)
    by_t = _matches_by_template(m for m in avail if m.template_id in pos_all)
    return by_t, pos_all


def expansion_step(seed: Seed, template: KeyPointSet, scene: KeyPointSet, matches: Sequence[Match],
                   cfg: GrowthConfig = GrowthConfig(), trace: Optional[StepTrace] = None) -> Optional[Seed]:
    """Grow ``seed`` by one correspondence, or return None when nothing qualifies."""
    by_t, pos_all = _prepare(template, scene, matches, seed)
    return _expansion_step(seed, _Arrays(template, scene), by_t, pos_all, cfg, trace)


def _interior_fill(seed: Seed, template: KeyPointSet, scene: KeyPointSet, by_t: dict,
                   cfg: GrowthConfig) -> Seed:
    """Add matches lying inside the grown hull, which expansion can never reach.

    A keypoint covered by the initial triangle (or swallowed later) is dropped
    from every expansion triangulation. Each such match is checked against the
    affine map of the member triangle that contains it, with the same error
    limit as the local coherence check.
    """
    seed_map = seed.scene_of()
    pos = {}
    for t in sorted(seed_map):
        pos.setdefault(template.position(t), t)
    if len(pos) < 3:
        return seed
    ids = list(pos.values())
    t_xy = np.array(list(pos.keys()))
    s_xy = np.array([scene.position(seed_map[t]) for t in ids])
    try:
        tri = Delaunay(t_xy)
    except QhullError:
        return seed
    limit = checks.coherence_error_limit(cfg.coherence_threshold)
    used = set(seed_map.values())
    cands = [m for t, ms in by_t.items() if t not in seed_map for m in ms if m.scene_id not in used]
    if not cands:
        return seed
    q = np.array([template.position(m.template_id) for m in cands])
    simplex = tri.find_simplex(q)
    scored = []
    for m, p, k in zip(cands, q, simplex):
        if k < 0:
            continue
        a, b, c = tri.simplices[k]
        src = np.column_stack([t_xy[[a, b, c]], np.ones(3)])
        try:
            coef = np.linalg.solve(src, s_xy[[a, b, c]])
        except np.linalg.LinAlgError:
            continue
        err = float(np.hypot(*(np.append(p, 1.0) @ coef - np.asarray(scene.position(m.scene_id)))))
        if err <= limit:
            scored.append((err, m.distance, m.template_id, m.scene_id, m))
    added, taken_t = [], set()
    for *_, m in sorted(scored, key=lambda r: r[:4]):
        if m.template_id in taken_t or m.scene_id in used:
            continue
        taken_t.add(m.template_id)
        used.add(m.scene_id)
        added.append(m)
    return seed.with_matches(added) if added else seed


def expand_seed(seed: Seed, template: KeyPointSet, scene: KeyPointSet, matches: Sequence[Match],
                cfg: GrowthConfig = GrowthConfig(), arrays: Optional[_Arrays] = None,
                history: Optional[list] = None) -> Seed:
    """Repeat expansion steps until the seed stops growing."""
    arrays = arrays or _Arrays(template, scene)
    by_t, pos_all = _prepare(template, scene, matches, seed)
    while True:
        grown = _expansion_step(seed, arrays, by_t, pos_all, cfg)
        if grown is None:
            return _interior_fill(seed, template, scene, by_t, cfg)
        if history is not None:
            history.append(len(grown))
        seed = grown


# -- merging and the outer loop ------------------------------------------------

def scene_hull(seed: Seed, scene: KeyPointSet):
    return convex_hull([scene.position(s) for s in seed.scene_ids])


def template_hull(seed: Seed, template: KeyPointSet):
    return convex_hull([template.position(t) for t in seed.template_ids])


def _mergeable(a: Seed, b: Seed, scene: KeyPointSet) -> bool:
    if not a.compatible(b):
        return False
    if set(a.matches) & set(b.matches):
        return True
    try:
        return polygons_intersect(scene_hull(a, scene), scene_hull(b, scene))
    except DegenerateInputError:
        return False


def merge(seeds: Sequence[Seed], scene: KeyPointSet) -> list[Seed]:
    """Union mergeable seeds until no pair qualifies; order follows the first member."""
    out = list(seeds)
    changed = True
    while changed:
        changed = False
        for i in range(len(out)):
            for j in range(i + 1, len(out)):
                if _mergeable(out[i], out[j], scene):
                    out[i] = out[i].union(out[j])
                    del out[j]
                    changed = True
                    break
            if changed:
                break
    return out


def grow_seeds(template: KeyPointSet, scene: KeyPointSet, matches: Sequence[Match],
               cfg: GrowthConfig = GrowthConfig(), pool: Optional[SeedPool] = None) -> list[Seed]:
    """Outer detection loop up to (and including) merging; no photometric step."""
    pool = pool if pool is not None else SeedPool()
    arrays = _Arrays(template, scene)
    available = sorted(set(matches))
    for rnd in range(cfg.max_rounds):
        initial = initial_seed_selection(template, scene, available, cfg, arrays)
        initial = [Seed(s.matches, (f"r{rnd}s{k}",)) for k, s in enumerate(initial)]
        pool.active = initial
        pool.initial_counts.append(len(initial))
        log.info("round %d: %d initial seeds", rnd, len(initial))
        if not initial:
            break
        claimed: set[Match] = set()
        round_expanded: list[Seed] = []
        for seed in initial:
            overlap = set(seed.matches) & claimed
            if overlap:
                # already covered by a seed grown earlier in this round
                extra = [m for m in seed.matches if m not in claimed]
                for k, other in enumerate(round_expanded):
                    if set(other.matches) & overlap and other.compatible(seed):
                        if extra:
                            round_expanded[k] = Seed(other.matches + tuple(extra),
                                                     other.provenance + seed.provenance)
                            claimed |= set(extra)
                        break
                continue
            snapshot = [m for m in available if m not in claimed]
            try:
                grown = expand_seed(seed, template, scene, snapshot, cfg, arrays)
            except DegenerateInputError as exc:
                log.debug("seed %s dropped: %s", seed.provenance, exc)
                continue
            log.info("seed %s grew %d -> %d", seed.provenance[0], len(seed), len(grown))
            if len(grown) >= cfg.min_seed_size:
                round_expanded.append(grown)
                claimed |= set(grown.matches)
        used = set(claimed)
        for seed in initial:
            used |= set(seed.matches)
        pool.consumed |= used
        available = [m for m in available if m not in used]
        pool.expanded.extend(round_expanded)
        pool.check_invariants()
        if not round_expanded:
            break
    return merge(pool.expanded, scene)


def detect(template: KeyPointSet, scene: KeyPointSet, cfg: GrowthConfig = GrowthConfig(),
           template_image=None, scene_image=None, matches: Optional[Sequence[Match]] = None,
           pool: Optional[SeedPool] = None):
    """Full pipeline: matching, seed growth, merging and photometric filtering."""
    from .rectify.photometric import photometric_filtering

    if len(template) == 0 or len(scene) == 0:
        return []
    if matches is None:
        matches = match_sets(template, scene, cfg.ratio_threshold)
    seeds = grow_seeds(template, scene, matches, cfg, pool)
    if not seeds:
        return []
    return photometric_filtering(template_image, scene_image, seeds, template, scene, tps_lambda=cfg.tps_lambda)
