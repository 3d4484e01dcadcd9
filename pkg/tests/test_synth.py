import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trigrow.core import Detection, GroundTruth, Match, Seed, TruthInstance
from trigrow.errors import ValidationError
from trigrow.geom import convex_hull
from trigrow.synth import SynthSpec, evaluate, generate_scene, iou, make_template


@pytest.fixture(scope="module")
def template():
    return make_template(80, seed=5)


def test_template_shape(template):
    assert len(template) == 80
    assert list(template.ids) == list(range(80))
    assert np.allclose(np.linalg.norm(template.descriptors, axis=1), 512.0)
    assert (template.descriptors >= 0).all()
    for corner in [(0, 0), (400, 0), (400, 300), (0, 300)]:
        assert corner in [tuple(p) for p in template.xy]


def test_identity_copy(template):
    scene, truth = generate_scene(template, SynthSpec(transforms=("identity",), descriptor_noise=0.0))
    assert len(scene) == len(template)
    assert np.array_equal(scene.xy, template.xy)
    assert np.array_equal(scene.descriptors, template.descriptors)
    assert np.allclose(scene.scales, template.scales)
    assert np.allclose(np.cos(scene.orientations - template.orientations), 1.0)
    assert truth.instances[0].correspondence == {i: i for i in range(80)}


@pytest.mark.parametrize("dropout", [0.3, 0.15, 0.5])
def test_dropout_count(template, dropout):
    scene, truth = generate_scene(template, SynthSpec(transforms=("affine",), dropout=dropout, seed=2))
    expect = int(np.floor((1 - dropout) * 80 + 0.5))
    assert len(truth.instances[0].correspondence) == expect == len(scene)


def test_outlier_fraction(template):
    scene, truth = generate_scene(template, SynthSpec(outlier_fraction=0.2, seed=3))
    planted = len(truth.instances[0].correspondence)
    assert (len(scene) - planted) / len(scene) == pytest.approx(0.2, abs=0.01)


def test_determinism(template):
    spec = SynthSpec(instances=2, transforms=("tps", "homography"), tps_amplitude=15.0, outliers=10, seed=42)
    a, ta = generate_scene(template, spec)
    b, tb = generate_scene(template, spec)
    assert np.array_equal(a.xy, b.xy) and np.array_equal(a.descriptors, b.descriptors)
    assert ta == tb


def test_similarity_keypoint_geometry(template):
    scene, truth = generate_scene(template, SynthSpec(transforms=("similarity",), descriptor_noise=0.0, seed=7))
    corr = truth.instances[0].correspondence
    # scale ratios and orientation offsets are constant for a similarity
    ratios = [scene.get(s).scale / template.get(t).scale for t, s in corr.items()]
    dth = [np.angle(np.exp(1j * (scene.get(s).orientation - template.get(t).orientation))) for t, s in corr.items()]
    assert np.ptp(ratios) < 1e-6
    assert np.ptp(np.unwrap(dth)) < 1e-6


def test_instances_inside_scene(template):
    scene, truth = generate_scene(template, SynthSpec(instances=4, transforms=("affine", "tps"), seed=8))
    w, h = truth.scene_size
    for inst in truth.instances:
        pts = np.array(inst.polygon)
        assert pts[:, 0].min() >= 0 and pts[:, 0].max() <= w
        assert pts[:, 1].min() >= 0 and pts[:, 1].max() <= h


def test_spec_validation_and_mapping():
    with pytest.raises(ValidationError):
        SynthSpec(dropout=1.0)
    with pytest.raises(ValidationError):
        SynthSpec(instances=-1)
    with pytest.raises(ValidationError):
        SynthSpec(transforms=("warp",))
    spec = SynthSpec(instances=3, transforms=("affine", "tps"), seed=9, scene_size=(800, 600))
    assert SynthSpec.from_mapping(spec.to_mapping()) == spec
    with pytest.raises(ValidationError):
        SynthSpec.from_mapping({"nonsense": "1"})


# -- IoU ----------------------------------------------------------------------------

def test_iou_examples():
    a = np.zeros((20, 30), bool)
    a[5:15, 5:15] = True
    b = np.zeros_like(a)
    b[5:15, 10:20] = True
    assert iou(a, a) == 1.0
    assert iou(a, ~a) == 0.0
    assert iou(a, b) == pytest.approx(1 / 3)
    assert iou(np.zeros_like(a), np.zeros_like(a)) == 0.0
    with pytest.raises(ValidationError):
        iou(a, a[:, :10])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_iou_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    a = rng.random((12, 9)) < 0.4
    b = rng.random((12, 9)) < 0.4
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


# -- evaluation ------------------------------------------------------------------------

def _perfect(truth: GroundTruth, k=0):
    inst = truth.instances[k]
    seed = Seed(tuple(Match(t, s, 0.0) for t, s in inst.correspondence.items()))
    return Detection(seed, (), tuple(inst.polygon), None)


def test_evaluate_perfect(template):
    _, truth = generate_scene(template, SynthSpec(transforms=("affine",), seed=10))
    rep = evaluate([_perfect(truth)], truth)
    assert rep.identified == 1 and rep.instances[0].iou == 1.0
    assert rep.precision == 1.0 and rep.recall == 1.0
    assert "identified 1/1, IoU 1.000" in rep.table()


def test_evaluate_nothing(template):
    _, truth = generate_scene(template, SynthSpec(instances=2, seed=11))
    rep = evaluate([], truth)
    assert rep.identified == 0 and len(rep.instances) == 2
    assert "identified 0/2" in rep.table()


def test_evaluate_one_to_one(template):
    _, truth = generate_scene(template, SynthSpec(instances=2, transforms=("affine",), seed=12))
    d = _perfect(truth, 0)
    rep = evaluate([d, d], truth)
    assert [r.detection for r in rep.instances].count(0) + [r.detection for r in rep.instances].count(1) <= 2
    assert rep.identified == 1
    assert len({r.detection for r in rep.instances if r.detection is not None}) == \
        sum(r.detection is not None for r in rep.instances)


def test_evaluate_partial_overlap():
    sq = ((0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0))
    truth = GroundTruth((TruthInstance({0: 0, 1: 1, 2: 2}, sq),), (20, 20))
    shifted = tuple(convex_hull([(x + 5, y) for x, y in sq]))
    det = Detection(Seed((Match(0, 0, 0), Match(1, 1, 0), Match(2, 5, 0))), (), shifted, 7.0)
    rep = evaluate([det], truth)
    assert rep.instances[0].iou == pytest.approx(1 / 3)
    assert not rep.instances[0].identified
    assert rep.instances[0].j == 7.0
    assert rep.precision == pytest.approx(2 / 3) and rep.recall == pytest.approx(2 / 3)
    assert rep.to_dict()["mean_iou"] == pytest.approx(1 / 3)
