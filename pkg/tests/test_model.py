import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq
from scipy.spatial.transform import Rotation

from monokin import model as body
from monokin.errors import ShapeMismatchError, StructureError, ValidationError
from monokin.model import (N_MARKERS, SHAPE_DIM, BodyShape, PoseFrame, PoseSequence,
                           SkeletonTemplate)

from conftest import random_pose_frame


def identity_frame(template):
    return PoseFrame(np.zeros((template.n_joints, 3)), np.zeros(3), np.zeros(3))


def test_shape_validation():
    with pytest.raises(ShapeMismatchError):
        BodyShape(np.zeros(9))
    with pytest.raises(ValidationError):
        BodyShape(np.r_[np.nan, np.zeros(9)])
    assert BodyShape.zeros().coeffs.shape == (SHAPE_DIM,)


def test_pose_validation(template):
    with pytest.raises(ValidationError):
        PoseFrame(np.full((template.n_joints, 3), np.inf), np.zeros(3), np.zeros(3))
    with pytest.raises(ValidationError):
        PoseSequence(np.zeros((1, template.n_joints, 3)), np.zeros((1, 3)), np.zeros((1, 3)), 30)
    with pytest.raises(ValidationError):
        PoseSequence(np.zeros((2, template.n_joints, 3)), np.zeros((2, 3)), np.zeros((2, 3)), 0)


def test_template_contents(template):
    assert len(template.marker_names) == N_MARKERS
    assert template.parents[0] == -1
    covered = {template.segment_names[s] for s in template.marker_segments}
    for part in ("forearm", "humerus", "torso", "pelvis", "femur", "tibia", "foot"):
        assert any(part in name for name in covered), part
    assert set(template.contact_keypoints) == set(body.CONTACT_CHANNELS)


def _template_doc():
    from importlib import resources
    return json.loads(resources.files("monokin.data").joinpath("skeleton_template.json").read_text())


def test_template_rejects_cycle():
    doc = _template_doc()
    doc["segments"][1]["parent"] = 2
    doc["segments"][2]["parent"] = 1
    with pytest.raises(StructureError):
        SkeletonTemplate.from_dict(doc)


def test_template_rejects_unknown_version():
    doc = _template_doc()
    doc["format_version"] = 99
    with pytest.raises(StructureError):
        SkeletonTemplate.from_dict(doc)


def test_identity_pose_accumulates_rest_offsets(template):
    fk = body.forward_kinematics(BodyShape.zeros(), identity_frame(template), template)
    expected = np.zeros_like(template.offsets)
    for i in template.order:
        p = template.parents[i]
        expected[i] = template.offsets[i] + (expected[p] if p >= 0 else 0)
    np.testing.assert_allclose(fk.origins, expected, atol=1e-12)
    np.testing.assert_allclose(fk.rotations, np.broadcast_to(np.eye(3), fk.rotations.shape),
                               atol=1e-12)


def test_root_translation_shifts_everything(template, rng):
    shape = BodyShape(rng.normal(0, 0.5, SHAPE_DIM))
    frame = random_pose_frame(template, rng)
    moved = PoseFrame(frame.joint_rotations, frame.root_translation + [1.0, 0, 0],
                      frame.root_orientation)
    a = body.forward_kinematics(shape, frame, template)
    b = body.forward_kinematics(shape, moved, template)
    np.testing.assert_allclose(b.origins - a.origins, np.tile([1.0, 0, 0], (len(a.origins), 1)),
                               atol=1e-12)
    np.testing.assert_allclose(body.extract_markers(shape, moved, template)
                               - body.extract_markers(shape, frame, template),
                               np.tile([1.0, 0, 0], (N_MARKERS, 1)), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_root_rotation_equivariance(template, seed):
    rng = np.random.default_rng(seed)
    shape = BodyShape(rng.normal(0, 0.5, SHAPE_DIM))
    frame = random_pose_frame(template, rng)
    rot = Rotation.from_rotvec(rng.normal(0, 1.0, 3))
    gamma = (rot * Rotation.from_rotvec(frame.root_orientation)).as_rotvec()
    turned = PoseFrame(frame.joint_rotations, frame.root_translation, gamma)
    a = body.forward_kinematics(shape, frame, template)
    b = body.forward_kinematics(shape, turned, template)
    root = a.origins[0]
    # independent oracle: rotate every unrotated point about the root origin
    for pa, pb in ((a.origins, b.origins),
                   (body.extract_markers(shape, frame, template),
                    body.extract_markers(shape, turned, template)),
                   (body.extract_keypoints(shape, frame, template),
                    body.extract_keypoints(shape, turned, template))):
        np.testing.assert_allclose(pb, root + rot.apply(pa - root), atol=1e-10)


def test_markers_match_manual_composition(template, rng):
    shape = BodyShape(rng.normal(0, 0.5, SHAPE_DIM))
    frame = random_pose_frame(template, rng)
    # oracle built from scipy rotations and the raw template arrays
    offsets = template.offsets + np.einsum("d,sdk->sk", shape.coeffs, template.shape_basis)
    rots = [None] * template.n_segments
    origins = [None] * template.n_segments
    rots[0] = Rotation.from_rotvec(frame.root_orientation).as_matrix()
    origins[0] = frame.root_translation + offsets[0]
    for i in template.order[1:]:
        p = template.parents[i]
        origins[i] = origins[p] + rots[p] @ offsets[i]
        rots[i] = rots[p] @ Rotation.from_rotvec(frame.joint_rotations[i - 1]).as_matrix()
    scale = 1.0 + template.anchor_shape_scale @ shape.coeffs
    expected = np.array([origins[s] + rots[s] @ (scale * off)
                         for s, off in zip(template.marker_segments, template.marker_offsets)])
    np.testing.assert_allclose(body.extract_markers(shape, frame, template), expected, atol=1e-12)


def test_tree_consistency(template, rng):
    shape = BodyShape(rng.normal(0, 0.5, SHAPE_DIM))
    fk = body.forward_kinematics(shape, random_pose_frame(template, rng), template)
    offsets = template.offsets + np.einsum("d,sdk->sk", shape.coeffs, template.shape_basis)
    for i in template.order[1:]:
        p = template.parents[i]
        np.testing.assert_allclose(fk.origins[i], fk.origins[p] + fk.rotations[p] @ offsets[i],
                                   atol=1e-12)


def test_height_of_zero_shape_is_template_value(template):
    assert body.model_height(BodyShape.zeros(), template) == pytest.approx(1.70, abs=1e-9)


def test_height_bisection_oracle(template):
    def f(b0):
        beta = np.zeros(SHAPE_DIM)
        beta[0] = b0
        return body.model_height(beta, template) - 1.80
    b0 = brentq(f, -10, 10, xtol=1e-14)
    beta = np.zeros(SHAPE_DIM)
    beta[0] = b0
    assert body.model_height(beta, template) == pytest.approx(1.80, abs=1e-9)
    assert body.model_height(body.shape_for_height(1.80, template), template) == \
        pytest.approx(1.80, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(b=st.floats(-3, 3), step=st.floats(0.01, 2))
def test_height_increases_with_first_coefficient(template, b, step):
    lo, hi = np.zeros(SHAPE_DIM), np.zeros(SHAPE_DIM)
    lo[0], hi[0] = b, b + step
    assert body.model_height(hi, template) > body.model_height(lo, template)


def test_static_markers_are_standing_markers(template, rng):
    shape = BodyShape(rng.normal(0, 0.5, SHAPE_DIM))
    a = body.static_markers(shape, template)
    b = body.extract_markers(shape, template.default_pose(), template)
    assert np.array_equal(a, b)


def test_static_markers_scale_with_height(template):
    base = body.static_markers(BodyShape.zeros(), template)
    tall = body.static_markers(body.shape_for_height(2.0, template), template)
    floor = body.static_markers(BodyShape.zeros(), template)[:, 1].min()
    ratio = 2.0 / body.model_height(BodyShape.zeros(), template)
    np.testing.assert_allclose(np.ptp(tall[:, 1]), ratio * np.ptp(base[:, 1]), rtol=1e-9)
    assert floor == pytest.approx(base[:, 1].min())


def test_markers_affine_in_shape(template, rng):
    frame = random_pose_frame(template, rng)
    h = 1e-3
    for j in (0, 3, 7):
        slopes = []
        for b in (rng.normal(0, 1, SHAPE_DIM), rng.normal(0, 1, SHAPE_DIM)):
            up, dn = b.copy(), b.copy()
            up[j] += h
            dn[j] -= h
            slopes.append((body.extract_markers(up, frame, template)
                           - body.extract_markers(dn, frame, template)) / (2 * h))
        if j == 0:
            # the stature coefficient also scales anchors, so slopes are affine not constant
            continue
        np.testing.assert_allclose(slopes[0], slopes[1], atol=1e-8)


def test_sequence_positions_match_single_frames(template, rng):
    from conftest import random_sequence
    shape = BodyShape(rng.normal(0, 0.5, SHAPE_DIM))
    seq = random_sequence(template, rng, 4)
    origins, kp, mk = body.sequence_positions(shape, seq, template)
    for i, fr in enumerate(seq.frames):
        np.testing.assert_allclose(mk[i], body.extract_markers(shape, fr, template), atol=1e-12)
        np.testing.assert_allclose(kp[i], body.extract_keypoints(shape, fr, template), atol=1e-12)
