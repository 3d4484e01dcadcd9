"""Synthetic scenes with planted instances, and the evaluation harness."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from .core import DESCRIPTOR_SIZE, Detection, GroundTruth, KeyPointSet, TruthInstance
from .errors import ValidationError
from .geom import convex_hull, rasterize_polygon
from .rectify.tps import tps_fit

TRANSFORM_KINDS = ("identity", "similarity", "affine", "homography", "tps")
DESCRIPTOR_NORM = 512.0


def make_template(n: int = 200, size: tuple[float, float] = (400.0, 300.0), seed: int = 0) -> KeyPointSet:
    """Template keypoints on a jittered grid, including the four frame corners.

    Descriptors are non-negative with norm 512, so unrelated keypoints sit
    roughly 500 apart in descriptor space.
    """
    if n < 4:
        raise ValidationError("a synthetic template needs at least 4 keypoints")
    rng = np.random.default_rng(seed)
    w, h = size
    corners = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)]
    m = n - 4
    pts = list(corners)
    if m:
        cols = max(1, math.ceil(math.sqrt(m * w / h)))
        rows = math.ceil(m / cols)
        cw, ch = w / cols, h / rows
        cells = np.sort(rng.choice(cols * rows, m, replace=False))
        jitter = rng.uniform(-0.3, 0.3, (m, 2))
        for c, (jx, jy) in zip(cells, jitter):
            r, q = divmod(int(c), cols)
            pts.append(((q + 0.5 + jx) * cw, (r + 0.5 + jy) * ch))
    xy = np.array(pts)
    scales = rng.lognormal(math.log(2.0), 0.4, n)
    orient = rng.uniform(0, 2 * math.pi, n)
    desc = rng.exponential(1.0, (n, DESCRIPTOR_SIZE))
    desc *= DESCRIPTOR_NORM / np.linalg.norm(desc, axis=1, keepdims=True)
    return KeyPointSet.from_arrays("template", range(n), xy, scales, orient, desc)


@dataclass(frozen=True)
class SynthSpec:
    instances: int = 1
    transforms: tuple[str, ...] = ("tps",)
    tps_amplitude: float = 15.0
    outliers: int = 0
    outlier_fraction: float = 0.0
    outlier_descriptors: str = "template"
    descriptor_noise: float = 4.0
    position_noise: float = 0.0
    dropout: float = 0.0
    seed: int = 0
    scene_size: tuple[int, int] = (1000, 750)

    def __post_init__(self):
        object.__setattr__(self, "transforms", tuple(self.transforms))
        object.__setattr__(self, "scene_size", tuple(int(v) for v in self.scene_size))
        if self.instances < 0:
            raise ValidationError("instances must be >= 0")
        if not 0 <= self.dropout < 1:
            raise ValidationError("dropout must lie in [0, 1)")
        if not 0 <= self.outlier_fraction < 1:
            raise ValidationError("outlier_fraction must lie in [0, 1)")
        if self.outliers < 0:
            raise ValidationError("outliers must be >= 0")
        if self.outlier_descriptors not in ("template", "random"):
            raise ValidationError("outlier_descriptors must be 'template' or 'random'")
        if not self.transforms and self.instances:
            raise ValidationError("at least one transform kind is required")
        for t in self.transforms:
            if t not in TRANSFORM_KINDS:
                raise ValidationError(f"unknown transform {t!r}; expected one of {TRANSFORM_KINDS}")

    def transform_of(self, k: int) -> str:
        return self.transforms[k % len(self.transforms)]

    def to_mapping(self) -> dict:
        d = asdict(self)
        d["transforms"] = ",".join(self.transforms)
        d["scene_size"] = f"{self.scene_size[0]}x{self.scene_size[1]}"
        return d

    @classmethod
    def from_mapping(cls, values: dict) -> "SynthSpec":
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, raw in values.items():
            if key not in kinds:
                raise ValidationError(f"unknown synth spec key {key!r}")
            raw = str(raw).strip()
            try:
                if key == "transforms":
                    kw[key] = tuple(t.strip() for t in raw.split(",") if t.strip())
                elif key == "scene_size":
                    w, h = raw.lower().split("x")
                    kw[key] = (int(w), int(h))
                elif key == "outlier_descriptors":
                    kw[key] = raw
                elif kinds[key] in ("int", int):
                    kw[key] = int(raw)
                else:
                    kw[key] = float(raw)
            except ValueError:
                raise ValidationError(f"bad value for {key}: {raw!r}") from None
        return cls(**kw)


class _InstanceMap:
    """Template-to-scene map of one planted instance."""

    def __init__(self, kind, linear, offset, proj=None, tps=None):
        self.kind = kind
        self.linear = linear
        self.offset = offset
        self.proj = proj
        self.tps = tps

    def apply(self, pts: np.ndarray) -> np.ndarray:
        p = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        if self.kind == "identity":
            return p.copy()
        q = p @ self.linear.T + self.offset
        if self.proj is not None:
            center, g = self.proj
            # mild perspective: divide by a plane tilted around the instance centre
            denom = 1.0 + (p - center) @ g
            q = center @ self.linear.T + self.offset + ((p - center) @ self.linear.T) / denom[:, None]
        if self.tps is not None:
            q = self.tps.apply(q)
        return q

    def jacobian(self, pts: np.ndarray, h: float = 1e-3) -> np.ndarray:
        p = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        dx = (self.apply(p + [h, 0]) - self.apply(p - [h, 0])) / (2 * h)
        dy = (self.apply(p + [0, h]) - self.apply(p - [0, h])) / (2 * h)
        return np.stack([dx, dy], axis=2)  # (n, 2, 2) columns d/dx, d/dy


def _instance_map(kind, k, spec, frame, rng) -> _InstanceMap:
    if kind == "identity":
        return _InstanceMap(kind, np.eye(2), np.zeros(2))
    p = spec.instances
    W, H = spec.scene_size
    cols = max(1, math.ceil(math.sqrt(p)))
    rows = math.ceil(p / cols) if p else 1
    sw, sh = W / cols, H / rows
    r, c = divmod(k, cols)
    slot_center = np.array([(c + 0.5) * sw, (r + 0.5) * sh])
    fw, fh = frame
    center = np.array([fw / 2, fh / 2])
    radius = math.hypot(fw, fh) / 2
    scale = 0.42 * min(sw, sh) / radius * rng.uniform(0.85, 1.0)
    angle = rng.uniform(-0.6, 0.6)
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    linear = scale * rot
    if kind in ("affine", "homography"):
        shear = np.array([[1.0, rng.uniform(-0.2, 0.2)], [0.0, 1.0]])
        aniso = np.diag([rng.uniform(0.85, 1.15), rng.uniform(0.85, 1.15)])
        linear = linear @ shear @ aniso
    offset = slot_center - center @ linear.T
    proj = None
    if kind == "homography":
        g = rng.uniform(-1, 1, 2)
        g *= rng.uniform(0.15, 0.3) / (np.linalg.norm(g) * radius)
        proj = (center, g)
    tps = None
    if kind == "tps":
        base = _InstanceMap("affine", linear, offset)
        gx, gy = np.meshgrid(np.linspace(-0.1, 1.1, 5) * fw, np.linspace(-0.1, 1.1, 5) * fh)
        ctrl = base.apply(np.column_stack([gx.ravel(), gy.ravel()]))
        disp = rng.uniform(-spec.tps_amplitude, spec.tps_amplitude, ctrl.shape)
        tps = tps_fit(ctrl, ctrl + disp)
    return _InstanceMap(kind, linear, offset, proj, tps)


def template_frame_size(template: KeyPointSet) -> tuple[float, float]:
    hi = template.xy.max(axis=0)
    return (float(hi[0]), float(hi[1]))


def _outline(frame, per_side=32):
    w, h = frame
    t = np.linspace(0, 1, per_side, endpoint=False)
    return np.concatenate([
        np.column_stack([t * w, np.zeros_like(t)]),
        np.column_stack([np.full_like(t, w), t * h]),
        np.column_stack([(1 - t) * w, np.full_like(t, h)]),
        np.column_stack([np.zeros_like(t), (1 - t) * h]),
    ])


def generate_scene(template: KeyPointSet, spec: SynthSpec):
    """Scene keypoints and planted ground truth for ``spec``.

    Scene ids are assigned in order: instance 0's surviving keypoints in
    template order, then the other instances, then the outliers.
    """
    if len(template) == 0:
        raise ValidationError("template must be non-empty")
    rng = np.random.default_rng(spec.seed)
    frame = template_frame_size(template)
    W, H = spec.scene_size
    n = len(template)
    xy_parts, sc_parts, th_parts, de_parts = [], [], [], []
    instances = []
    next_id = 0
    for k in range(spec.instances):
        kind = spec.transform_of(k)
        fmap = _instance_map(kind, k, spec, frame, rng)
        keep_n = int(math.floor((1 - spec.dropout) * n + 0.5))
        rows = np.sort(rng.choice(n, keep_n, replace=False)) if keep_n < n else np.arange(n)
        src = template.xy[rows]
        pos = fmap.apply(src)
        jac = fmap.jacobian(src)
        theta = template.orientations[rows]
        direction = np.column_stack([np.cos(theta), np.sin(theta)])
        mapped = np.einsum("nij,nj->ni", jac, direction)
        new_theta = np.mod(np.arctan2(mapped[:, 1], mapped[:, 0]), 2 * math.pi)
        scale_mult = np.sqrt(np.abs(np.linalg.det(jac)))
        if spec.position_noise > 0:
            pos = pos + rng.normal(0, spec.position_noise, pos.shape)
        desc = template.descriptors[rows]
        if spec.descriptor_noise > 0:
            desc = np.maximum(desc + rng.normal(0, spec.descriptor_noise, desc.shape), 0.0)
        ids = np.arange(next_id, next_id + len(rows))
        next_id += len(rows)
        corr = {int(template.ids[r]): int(s) for r, s in zip(rows, ids)}
        try:
            poly = tuple(convex_hull([tuple(p) for p in fmap.apply(_outline(frame))]))
        except Exception:
            poly = ()
        instances.append(TruthInstance(corr, poly))
        xy_parts.append(pos)
        sc_parts.append(template.scales[rows] * scale_mult)
        th_parts.append(new_theta)
        de_parts.append(desc)
    n_inl = next_id
    n_out = spec.outliers
    if spec.outlier_fraction > 0:
        n_out += int(math.floor(spec.outlier_fraction * n_inl / (1 - spec.outlier_fraction) + 0.5))
    if n_out:
        xy_parts.append(np.column_stack([rng.uniform(0, W, n_out), rng.uniform(0, H, n_out)]))
        sc_parts.append(rng.lognormal(math.log(2.0), 0.4, n_out))
        th_parts.append(rng.uniform(0, 2 * math.pi, n_out))
        if spec.outlier_descriptors == "template":
            # copies of random template descriptors placed anywhere: wrong matches
            src = rng.integers(0, n, n_out)
            d = template.descriptors[src] + rng.normal(0, max(spec.descriptor_noise, 1e-9), (n_out, DESCRIPTOR_SIZE))
            de_parts.append(np.maximum(d, 0.0))
        else:
            d = rng.exponential(1.0, (n_out, DESCRIPTOR_SIZE))
            de_parts.append(d * DESCRIPTOR_NORM / np.linalg.norm(d, axis=1, keepdims=True))
    total = n_inl + n_out
    if total == 0:
        scene = KeyPointSet("scene", [])
    else:
        scene = KeyPointSet.from_arrays(
            "scene", range(total), np.concatenate(xy_parts), np.concatenate(sc_parts),
            np.concatenate(th_parts), np.concatenate(de_parts),
        )
    notes = {"spec": spec.to_mapping(), "template_frame": list(frame), "outliers": n_out}
    return scene, GroundTruth(tuple(instances), (W, H), notes)


# -- evaluation --------------------------------------------------------------

def iou(mask_a: np.ndarray, mask_b: np.ndarray) -> float:
    a = np.asarray(mask_a, dtype=bool)
    b = np.asarray(mask_b, dtype=bool)
    if a.shape != b.shape:
        raise ValidationError(f"mask dimension mismatch: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum() / union)


def truth_mask(inst: TruthInstance, scene_size) -> np.ndarray:
    w, h = scene_size
    if inst.mask is not None:
        m = np.asarray(inst.mask, dtype=bool)
        if m.shape != (h, w):
            raise ValidationError(f"truth mask is {m.shape[1]}x{m.shape[0]}, scene is {w}x{h}")
        return m
    return rasterize_polygon(inst.polygon or (), w, h)


@dataclass
class InstanceResult:
    instance: int
    identified: bool
    iou: float
    j: Optional[float]
    detection: Optional[int]


@dataclass
class EvalReport:
    method: str
    instances: list[InstanceResult]
    precision: float
    recall: float
    detections: int
    identification_threshold: float = 0.5
    notes: dict = field(default_factory=dict)

    @property
    def identified(self) -> int:
        return sum(r.identified for r in self.instances)

    @property
    def mean_iou(self) -> float:
        if not self.instances:
            return 0.0
        return float(np.mean([r.iou for r in self.instances]))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "instances": [asdict(r) for r in self.instances],
            "precision": self.precision,
            "recall": self.recall,
            "detections": self.detections,
            "identified": self.identified,
            "mean_iou": self.mean_iou,
            "identification_threshold": self.identification_threshold,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def table(self) -> str:
        """Per-instance rows (Identified, IoU, Median) and a summary line."""
        heads = [f"#{r.instance + 1}" for r in self.instances]
        rows = [
            ("Identified", ["yes" if r.identified else "no" for r in self.instances]),
            ("IoU", [f"{r.iou:.3f}" for r in self.instances]),
            ("Median", ["-" if r.j is None else f"{r.j:g}" for r in self.instances]),
        ]
        width = max([len(h) for h in heads] + [len(v) for _, vals in rows for v in vals] + [3])
        label_w = max(len(name) for name, _ in rows) + 2
        lines = [" " * label_w + " ".join(h.rjust(width) for h in heads)]
        for name, vals in rows:
            lines.append(name.ljust(label_w) + " ".join(v.rjust(width) for v in vals))
        lines.append(
            f"identified {self.identified}/{len(self.instances)}, IoU {self.mean_iou:.3f}"
            f" (method {self.method}; identified means IoU >= {self.identification_threshold:g})"
        )
        lines.append(f"match precision {self.precision:.3f}, recall {self.recall:.3f}, detections {self.detections}")
        return "\n".join(lines) + "\n"


def evaluate(detections: Sequence[Detection], truth: GroundTruth, method: str = "growth",
             threshold: float = 0.5) -> EvalReport:
    """Greedy one-to-one assignment of detections to planted instances by IoU."""
    w, h = truth.scene_size
    t_masks = [truth_mask(inst, truth.scene_size) for inst in truth.instances]
    d_masks = [rasterize_polygon(d.scene_hull, w, h) for d in detections]
    pairs = []
    for i, dm in enumerate(d_masks):
        for k, tm in enumerate(t_masks):
            v = iou(dm, tm)
            if v > 0:
                pairs.append((-v, i, k))
    pairs.sort()
    used_d, assigned = set(), {}
    for neg, i, k in pairs:
        if i in used_d or k in assigned:
            continue
        used_d.add(i)
        assigned[k] = (i, -neg)
    results = []
    for k in range(len(t_masks)):
        if k in assigned:
            i, v = assigned[k]
            results.append(InstanceResult(k, v >= threshold, v, detections[i].score_j, i))
        else:
            results.append(InstanceResult(k, False, 0.0, None, None))
    predicted = {(m.template_id, m.scene_id) for d in detections for m in d.seed.matches}
    planted = {(t, s) for inst in truth.instances for t, s in inst.correspondence.items()}
    hit = len(predicted & planted)
    precision = hit / len(predicted) if predicted else 1.0
    recall = hit / len(planted) if planted else 1.0
    return EvalReport(method, results, precision, recall, len(detections), threshold)


# -- benchmark suites --------------------------------------------------------
# Fixed, seeded scene families shared by the acceptance tests and scripts/.

def deformation_case(k: int, n: int = 200, amplitude: float = 15.0):
    """Single TPS-bent instance with 20% outliers and 15% dropout."""
    template = make_template(n, seed=100 + k)
    spec = SynthSpec(instances=1, transforms=("tps",), tps_amplitude=amplitude,
                     outlier_fraction=0.2, dropout=0.15, seed=k)
    scene, truth = generate_scene(template, spec)
    return template, scene, truth


def multi_instance_case(k: int, n: int = 200, amplitude: float = 15.0):
    """Three instances; odd k are affine-dominant (2 affine + 1 TPS), even k TPS-dominant."""
    template = make_template(n, seed=200 + k)
    kinds = ("affine", "tps", "affine") if k % 2 else ("tps", "affine", "tps")
    spec = SynthSpec(instances=3, transforms=kinds, tps_amplitude=amplitude, seed=k)
    scene, truth = generate_scene(template, spec)
    return template, scene, truth


def affine_dominant(k: int) -> bool:
    return k % 2 == 1
