"""Template duplicated as the scene: how much of the ratio-test match set ends up grouped.

    python3 scripts/exact_copy.py --keypoints 50 100 200 400
"""
import argparse

from trigrow.core import match_sets
from trigrow.growth import detect
from trigrow.synth import SynthSpec, evaluate, generate_scene, make_template


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--keypoints", type=int, nargs="+", default=[50, 100, 200, 400])
    ap.add_argument("--seeds", type=int, default=3, help="templates per size")
    args = ap.parse_args()
    for n in args.keypoints:
        for s in range(args.seeds):
            template = make_template(n, seed=s)
            scene, truth = generate_scene(template, SynthSpec(transforms=("identity",), descriptor_noise=0.0))
            dets = detect(template, scene)
            grouped = max((len(d.seed) for d in dets), default=0)
            rep = evaluate(dets, truth)
            print(f"n={n:4d} seed={s}: {len(dets)} detection(s), grouped {grouped}/{len(match_sets(template, scene))}, "
                  f"IoU {rep.instances[0].iou:.3f}")


if __name__ == "__main__":
    main()
