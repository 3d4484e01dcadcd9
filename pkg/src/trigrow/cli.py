"""Command-line entry point: detect, baseline, synth, eval and dump-mesh.

Exit codes: 0 success (including zero detections), 1 parse or validation
problems, 2 file-system errors. Set TRIGROW_LOG=INFO (or DEBUG) for progress.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional

from . import __version__, io
from .errors import ParseError, TrigrowError, ValidationError
from .geom import constrained_delaunay, delaunay
from .growth import GrowthConfig, SeedPool, detect
from .rectify import RansacConfig, baseline_detect, read_pnm
from .scores import rcs_mu
from .svg import mesh_svg, overlay_svg
from .synth import SynthSpec, evaluate, generate_scene, make_template

log = logging.getLogger("trigrow")


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever sys.stderr is at emit time (it may be swapped after setup)."""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


def _setup_logging() -> None:
    level = os.environ.get("TRIGROW_LOG", "WARNING").upper()
    logger = logging.getLogger("trigrow")
    for h in list(logger.handlers):
        if isinstance(h, _StderrHandler):
            logger.removeHandler(h)
    handler = _StderrHandler()
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(getattr(logging, level, logging.WARNING))
    logger.propagate = False


def _require(path: Optional[str], flag: str) -> Path:
    if path is None:
        raise ValidationError(f"{flag} is required")
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(2, "no such file", str(p))
    return p


def _parse_size(text: Optional[str]):
    if text is None:
        return None
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise ValidationError(f"size must look like WIDTHxHEIGHT, got {text!r}") from None


def _growth_config(args) -> GrowthConfig:
    values = io.read_key_values(args.config) if args.config else {}
    if "rcs_mu" in values and values["rcs_mu"] in ("paper", "corrected"):
        values["rcs_mu"] = repr(rcs_mu(values["rcs_mu"]))
    cfg = GrowthConfig.from_mapping(values)
    return cfg.updated(
        kd_leaves=args.kd_leaves,
        ccs_threshold=args.ccs_threshold,
        rcs_threshold=args.rcs_threshold,
        ratio_threshold=args.ratio,
        rcs_mu=rcs_mu(args.rcs_mu) if args.rcs_mu else None,
    )


def _ransac_config(args) -> RansacConfig:
    values = io.read_key_values(args.config) if args.config else {}
    kw = {}
    for key, cast in (("iterations", int), ("inlier_threshold", float), ("min_inliers", int), ("seed", int)):
        if key in values:
            try:
                kw[key] = cast(values[key])
            except ValueError:
                raise ValidationError(f"config value {key}={values[key]!r} is not a number") from None
    if args.seed is not None:
        kw["seed"] = args.seed
    return RansacConfig(**kw)


def _load_pair(args):
    t_path = _require(args.template, "--template")
    s_path = _require(args.scene, "--scene")
    template = io.load_keypoints(t_path, "template")
    scene = io.load_keypoints(s_path, "scene")
    t_img = read_pnm(_require(args.template_image, "--template-image")) if args.template_image else None
    s_img = read_pnm(_require(args.scene_image, "--scene-image")) if args.scene_image else None
    return template, scene, t_img, s_img


def _write_outputs(args, method, detections, template, scene, t_size, s_size) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_detections(out / "detections.json", detections, method, s_size)
    svg_path = Path(args.svg) if args.svg else out / "overlay.svg"
    svg_path.write_text(overlay_svg(template, scene, detections, t_size, s_size), encoding="utf-8")
    lines = [f"method {method}: {len(detections)} detection(s)"]
    for k, d in enumerate(detections):
        j = "-" if d.score_j is None else f"{d.score_j:g}"
        lines.append(f"  #{k + 1}: {len(d.seed)} matches, j {j}, seeds {','.join(d.seed.provenance)}")
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def cmd_detect(args) -> int:
    cfg = _growth_config(args)
    template, scene, t_img, s_img = _load_pair(args)
    if (t_img is None) != (s_img is None):
        raise ValidationError("give both --template-image and --scene-image, or neither")
    pool = SeedPool()
    detections = detect(template, scene, cfg, t_img, s_img, pool=pool)
    log.info("initial seeds per round: %s", pool.initial_counts)
    t_size = (t_img.width, t_img.height) if t_img else None
    s_size = (s_img.width, s_img.height) if s_img else _parse_size(args.scene_size)
    _write_outputs(args, "growth", detections, template, scene, t_size, s_size)
    return 0


def cmd_baseline(args) -> int:
    rcfg = _ransac_config(args)
    template, scene, t_img, s_img = _load_pair(args)
    ratio = args.ratio if args.ratio is not None else GrowthConfig().ratio_threshold
    t_size = (t_img.width, t_img.height) if t_img else _parse_size(args.template_size)
    s_size = (s_img.width, s_img.height) if s_img else _parse_size(args.scene_size)
    detections = baseline_detect(template, scene, rcfg, ratio_threshold=ratio, scene_size=s_size,
                                 template_size=t_size)
    _write_outputs(args, "baseline", detections, template, scene, t_size, s_size)
    return 0


def cmd_synth(args) -> int:
    values = io.read_key_values(args.config) if args.config else {}
    if args.seed is not None:
        values["seed"] = str(args.seed)
    spec = SynthSpec.from_mapping(values)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.template:
        template = io.load_keypoints(_require(args.template, "--template"), "template")
    else:
        template = make_template(args.keypoints, seed=spec.seed)
        io.write_keypoints(out / "template.key", template)
    scene, truth = generate_scene(template, spec)
    io.write_keypoints(out / "scene.key", scene)
    io.write_truth(out / "truth.json", truth)
    io.write_key_values(out / "spec.txt", spec.to_mapping())
    sys.stdout.write(f"scene {len(scene)} keypoints, {len(truth.instances)} instance(s) -> {out}\n")
    return 0


def cmd_eval(args) -> int:
    detections, doc = io.load_detections(_require(args.detections, "--detections"))
    truth = io.load_truth(_require(args.truth, "--truth"))
    size = doc.get("scene_size")
    if size is not None and tuple(size) != tuple(truth.scene_size):
        raise ValidationError(
            f"detections were made on a {size[0]}x{size[1]} scene, truth is "
            f"{truth.scene_size[0]}x{truth.scene_size[1]}"
        )
    report = evaluate(detections, truth, doc.get("method", "growth"))
    table = report.table()
    sys.stdout.write(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        (out / "report.txt").write_text(table, encoding="utf-8")
    return 0


def cmd_dump_mesh(args) -> int:
    kps = io.load_keypoints(_require(args.template, "--template"))
    pos = {}
    taken = set()
    for p in kps:
        if p.xy not in taken:
            taken.add(p.xy)
            pos[p.id] = p.xy
    segments = []
    if args.segments:
        seg_path = _require(args.segments, "--segments")
        for lineno, line in enumerate(seg_path.read_text(encoding="utf-8").splitlines(), start=1):
            toks = line.split("#", 1)[0].split()
            if not toks:
                continue
            if len(toks) != 2 or not all(t.lstrip("-").isdigit() for t in toks):
                raise ParseError("expected two keypoint ids", seg_path, lineno)
            segments.append((int(toks[0]), int(toks[1])))
    graph = constrained_delaunay(pos, segments) if segments else delaunay(pos)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "mesh.json").write_text(graph.to_json(), encoding="utf-8")
    svg_path = Path(args.svg) if args.svg else out / "mesh.svg"
    svg_path.write_text(mesh_svg(graph), encoding="utf-8")
    sys.stdout.write(f"{len(graph.vertices)} vertices, {len(graph.edges)} edges, "
                     f"{len(graph.triangles)} triangles -> {out}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trigrow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"trigrow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, images=True):
        p.add_argument("--template", help="template keypoint file")
        p.add_argument("--scene", help="scene keypoint file")
        if images:
            p.add_argument("--template-image", help="template PPM image")
            p.add_argument("--scene-image", help="scene PPM image")
            p.add_argument("--scene-size", help="scene WIDTHxHEIGHT when no image is given")
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--svg", help="SVG output path (default: inside --out)")
        p.add_argument("--ratio", type=float, help="descriptor ratio-test threshold")
        p.add_argument("--seed", type=int, help="random seed")

    p = sub.add_parser("detect", help="triangulation-growth detector")
    common(p)
    p.add_argument("--kd-leaves", type=int)
    p.add_argument("--ccs-threshold", type=float)
    p.add_argument("--rcs-threshold", type=float)
    p.add_argument("--rcs-mu", choices=("paper", "corrected"))
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("baseline", help="greedy multi-instance RANSAC homography detector")
    common(p)
    p.add_argument("--template-size", help="template WIDTHxHEIGHT when no image is given")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("synth", help="generate a synthetic scene with planted truth")
    p.add_argument("--template", help="template keypoint file (default: generate one)")
    p.add_argument("--keypoints", type=int, default=200, help="size of a generated template")
    p.add_argument("--config", help="synthetic scene spec (key = value)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score detections against planted truth")
    p.add_argument("--detections", help="detections JSON")
    p.add_argument("--truth", help="truth JSON")
    p.add_argument("--out", help="directory for report.json / report.txt")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dump-mesh", help="Delaunay mesh of a keypoint file as JSON and SVG")
    p.add_argument("--template", help="keypoint file")
    p.add_argument("--segments", help="file of forced segments, one 'id id' pair per line")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--svg", help="SVG output path (default: inside --out)")
    p.set_defaults(func=cmd_dump_mesh)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        where = exc.filename if exc.filename is not None else ""
        sys.stderr.write(f"trigrow: I/O error: {where}: {exc.strerror or exc}\n")
        return 2
    except TrigrowError as exc:
        sys.stderr.write(f"trigrow: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
