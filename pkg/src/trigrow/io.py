"""Text file formats: keypoints, matches, key=value configs, detection JSON.

Floats are written with ``repr`` so that a write/read cycle reproduces every
value bit for bit.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import jsonschema
import numpy as np

from .core import (
    DESCRIPTOR_SIZE,
    Detection,
    GroundTruth,
    KeyPoint,
    KeyPointSet,
    Match,
    Seed,
    TruthInstance,
)
from .errors import ParseError, ValidationError


def _float(tok: str, path, lineno) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"not a number: {tok!r}", path, lineno) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value: {tok!r}", path, lineno)
    return v


def _int(tok: str, path, lineno) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"not an integer: {tok!r}", path, lineno) from None


def _data_lines(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line.split()


def load_keypoints(path, image_tag: Optional[str] = None, degrees: bool = False) -> KeyPointSet:
    """Read ``id x y scale orientation d0 .. d127`` records, one per line."""
    path = Path(path)
    tag = image_tag if image_tag is not None else path.stem
    points = []
    seen = {}
    for lineno, toks in _data_lines(path):
        if len(toks) != 5 + DESCRIPTOR_SIZE:
            n_desc = max(len(toks) - 5, 0)
            raise ValidationError(
                f"{path}:{lineno}: descriptor length {n_desc} != {DESCRIPTOR_SIZE}"
            )
        kp_id = _int(toks[0], path, lineno)
        if kp_id in seen:
            raise ValidationError(
                f"{path}:{lineno}: duplicate keypoint id {kp_id} (first seen on line {seen[kp_id]})"
            )
        seen[kp_id] = lineno
        x, y, s, theta = (_float(t, path, lineno) for t in toks[1:5])
        if degrees:
            theta = math.radians(theta)
        desc = np.array([_float(t, path, lineno) for t in toks[5:]], dtype=np.float64)
        try:
            points.append(KeyPoint(kp_id, x, y, s, theta, desc))
        except ValidationError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from None
    return KeyPointSet(tag, points)


def write_keypoints(path, kps: KeyPointSet, header: Optional[str] = None) -> None:
    lines = []
    if header:
        lines.extend("# " + h for h in header.splitlines())
    for p in kps:
        fields = [str(p.id), repr(p.x), repr(p.y), repr(p.scale), repr(p.orientation)]
        fields.extend(repr(float(v)) for v in p.descriptor)
        lines.append(" ".join(fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_matches(path) -> list[Match]:
    path = Path(path)
    out = []
    for lineno, toks in _data_lines(path):
        if len(toks) != 3:
            raise ParseError(f"expected 'template_id scene_id distance', got {len(toks)} fields", path, lineno)
        try:
            out.append(Match(_int(toks[0], path, lineno), _int(toks[1], path, lineno), _float(toks[2], path, lineno)))
        except ValidationError as exc:
            raise ParseError(str(exc), path, lineno) from None
    return out


def write_matches(path, matches: Iterable[Match]) -> None:
    text = "".join(f"{m.template_id} {m.scene_id} {m.distance!r}\n" for m in matches)
    Path(path).write_text(text, encoding="utf-8")


def read_key_values(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` comments and blank lines ignored."""
    path = Path(path)
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"expected key=value, got {line!r}", path, lineno)
            key, value = line.split("=", 1)
            key = key.strip().replace("-", "_")
            if not key:
                raise ParseError("empty key", path, lineno)
            out[key] = value.strip()
    return out


def write_key_values(path, values: dict) -> None:
    lines = [f"{k} = {v}" for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- detection documents -----------------------------------------------------

DETECTION_SCHEMA = {
    "type": "object",
    "required": ["method", "detections"],
    "properties": {
        "method": {"type": "string"},
        "scene_size": {
            "anyOf": [
                {"type": "null"},
                {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
            ]
        },
        "detections": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["seeds", "template_hull", "scene_hull", "score_j"],
                "properties": {
                    "seeds": {
                        "type": "array",
                        "items": {
                            "type": "array",
                            "items": {"type": "number"},
                            "minItems": 3,
                            "maxItems": 3,
                        },
                    },
                    "provenance": {"type": "array", "items": {"type": "string"}},
                    "template_hull": {"$ref": "#/definitions/polygon"},
                    "scene_hull": {"$ref": "#/definitions/polygon"},
                    "score_j": {"anyOf": [{"type": "null"}, {"type": "number", "minimum": 0, "maximum": 255}]},
                },
            },
        },
    },
    "definitions": {
        "polygon": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        }
    },
}


def detections_to_dict(detections: Sequence[Detection], method: str, scene_size=None) -> dict:
    return {
        "method": method,
        "scene_size": list(scene_size) if scene_size is not None else None,
        "detections": [
            {
                "seeds": [[m.template_id, m.scene_id, m.distance] for m in d.seed.matches],
                "provenance": list(d.seed.provenance),
                "template_hull": [[x, y] for x, y in d.template_hull],
                "scene_hull": [[x, y] for x, y in d.scene_hull],
                "score_j": d.score_j,
            }
            for d in detections
        ],
    }


def dumps_detections(detections: Sequence[Detection], method: str, scene_size=None) -> str:
    doc = detections_to_dict(detections, method, scene_size)
    jsonschema.validate(doc, DETECTION_SCHEMA)
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def write_detections(path, detections, method: str, scene_size=None) -> None:
    Path(path).write_text(dumps_detections(detections, method, scene_size), encoding="utf-8")


def load_detections(path) -> tuple[list[Detection], dict]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    try:
        jsonschema.validate(doc, DETECTION_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"{path}: {exc.message}") from None
    out = []
    for det in doc["detections"]:
        matches = [Match(int(t), int(s), float(d)) for t, s, d in det["seeds"]]
        seed = Seed(tuple(matches), tuple(det.get("provenance", [])))
        out.append(
            Detection(
                seed,
                tuple((float(x), float(y)) for x, y in det["template_hull"]),
                tuple((float(x), float(y)) for x, y in det["scene_hull"]),
                det["score_j"],
            )
        )
    return out, doc


# -- ground truth ------------------------------------------------------------

def truth_to_dict(truth: GroundTruth) -> dict:
    insts = []
    for inst in truth.instances:
        entry = {"correspondence": [[int(t), int(s)] for t, s in sorted(inst.correspondence.items())]}
        if inst.polygon is not None:
            entry["polygon"] = [[x, y] for x, y in inst.polygon]
        insts.append(entry)
    return {"scene_size": list(truth.scene_size), "instances": insts, "notes": truth.notes}


def write_truth(path, truth: GroundTruth) -> None:
    Path(path).write_text(json.dumps(truth_to_dict(truth), indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_truth(path) -> GroundTruth:
    """Read a truth document; an instance may reference a PGM mask file."""
    from .rectify.raster import read_pnm

    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    try:
        w, h = (int(v) for v in doc["scene_size"])
        insts = []
        for entry in doc["instances"]:
            corr = {int(t): int(s) for t, s in entry.get("correspondence", [])}
            poly = entry.get("polygon")
            mask = None
            if "mask" in entry:
                raster = read_pnm(path.parent / entry["mask"])
                mask = raster.pixels.reshape(raster.height, raster.width, -1).any(axis=2)
                if mask.shape != (h, w):
                    raise ValidationError(
                        f"{path}: mask {entry['mask']} is {raster.width}x{raster.height}, scene is {w}x{h}"
                    )
            insts.append(
                TruthInstance(corr, tuple((float(x), float(y)) for x, y in poly) if poly else None, mask)
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: malformed truth document ({exc})") from None
    return GroundTruth(tuple(insts), (w, h), doc.get("notes", {}))
