import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from monokin.biomech import BiomechModel, N_COORDINATES, ik_frame, ik_sequence, model_fk, scale_model
from monokin.errors import RangeError, ScalingError, ShapeMismatchError, StructureError
from monokin.metrics import EVAL_ROTATIONAL


def random_q(model, rng, spread=0.2):
    lo, hi = model.ranges[:, 0], model.ranges[:, 1]
    q = np.clip(rng.normal(0, spread, N_COORDINATES), lo, hi)
    q[:3] = [0.1, 0.95, -0.05]
    return q


def test_coordinate_layout(generic):
    names = generic.coordinate_names
    assert len(names) == 33
    groups = {"pelvis": 6, "lumbar": 3, "hip_": 6, "knee_angle": 2, "ankle_angle": 2,
              "subtalar": 2, "arm_": 6, "elbow": 2, "pro_sup": 2, "mtp": 2}
    for prefix, count in groups.items():
        assert sum(n.startswith(prefix) for n in names) == count, prefix
    assert generic.rotational.sum() == 30
    coupled = {generic.coordinate_names[t.coordinate] for t in generic.coupled_transforms()}
    assert coupled == {"knee_angle_r", "knee_angle_l"}


def test_spline_is_c1(generic):
    for t in generic.coupled_transforms():
        xs = np.linspace(t.spline.x[0], t.spline.x[-1], 2001)
        d = t.spline(xs, 1)
        assert np.all(np.isfinite(d))
        assert np.max(np.abs(np.diff(d))) < 1e-2


def test_neutral_is_calibration_layout(generic):
    m = model_fk(generic, generic.neutral())
    ref = model_fk(generic, np.zeros(33))
    assert np.array_equal(m, ref)
    res = ik_frame(generic, m, generic.neutral())
    assert res.rms < 1e-9
    np.testing.assert_allclose(res.q, generic.neutral(), atol=1e-9)


def test_pelvis_translation_is_rigid(generic, rng):
    q = random_q(generic, rng)
    q2 = q.copy()
    q2[generic.coordinate_index("pelvis_tx")] += 0.3
    q2[generic.coordinate_index("pelvis_tz")] -= 0.2
    np.testing.assert_allclose(model_fk(generic, q2) - model_fk(generic, q),
                               np.tile([0.3, 0.0, -0.2], (len(generic.marker_names), 1)),
                               atol=1e-12)


def test_knee_dependent_axes_follow_splines(generic):
    q = generic.neutral()
    knee = generic.coordinate_index("knee_angle_r")
    q[knee] = np.deg2rad(60.0)
    for t in generic.coupled_transforms():
        if t.coordinate == knee:
            value, _ = t.value(q)
            assert value == t.spline(np.deg2rad(60.0))


def test_out_of_range_rejected(generic):
    q = generic.neutral()
    q[generic.coordinate_index("knee_angle_r")] = generic.ranges[
        generic.coordinate_index("knee_angle_r"), 1] + 0.1
    with pytest.raises(RangeError):
        model_fk(generic, q)
    with pytest.raises(ShapeMismatchError):
        model_fk(generic, np.zeros(30))


def test_model_file_round_trip(generic, tmp_path):
    scaled = generic.with_scales(np.linspace(0.9, 1.1, generic.n_segments))
    scaled.save(tmp_path / "m.json")
    back = BiomechModel.load(tmp_path / "m.json")
    np.testing.assert_array_equal(back.scales, scaled.scales)
    q = random_q(generic, np.random.default_rng(0))
    np.testing.assert_array_equal(model_fk(back, q), model_fk(scaled, q))


def test_bad_model_file(generic):
    doc = generic.to_dict()
    doc["segments"][1]["parent"] = "nowhere"
    with pytest.raises(StructureError):
        BiomechModel.from_dict(doc)


# -- scaling

def test_scaling_identity_and_uniform(generic):
    m = model_fk(generic, generic.neutral())
    np.testing.assert_allclose(scale_model(m, generic).scales, 1.0, atol=1e-9)
    np.testing.assert_allclose(scale_model(1.1 * m, generic).scales, 1.1, atol=1e-9)


def test_scaling_single_thigh(generic):
    femur = generic.segment_index("r_femur")
    scales = np.ones(generic.n_segments)
    scales[femur] = 1.05
    subject = generic.with_scales(scales)
    est = scale_model(model_fk(subject, subject.neutral()), generic).scales
    assert est[femur] == pytest.approx(1.05, abs=0.01)
    others = np.delete(est, femur)
    assert np.all(np.abs(others - 1.0) <= 0.01)


def test_scaling_degenerate_pair(generic):
    m = model_fk(generic, generic.neutral())
    seg, pairs = next(iter(generic.scaling_pairs.items()))
    a, b = pairs[0]
    idx = {n: i for i, n in enumerate(generic.marker_names)}
    m[idx[b]] = m[idx[a]] + 1e-4
    with pytest.raises(ScalingError, match=f"{a}-{b}"):
        scale_model(m, generic)


def test_uniform_scale_invariance_of_ik(generic, rng):
    q = random_q(generic, rng)
    big = generic.with_scales(generic.scales * 1.2)
    q_big = q.copy()
    q_big[:3] *= 1.2
    res = ik_frame(big, model_fk(big, q_big), generic.neutral())
    rot = generic.rotational
    np.testing.assert_allclose(res.q[rot], q[rot], atol=np.deg2rad(0.1))
    np.testing.assert_allclose(res.q[~rot], 1.2 * q[~rot], atol=5e-4)


# -- inverse kinematics

@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_round_trip(generic, seed):
    rng = np.random.default_rng(seed)
    q = rng.uniform(generic.ranges[:, 0], generic.ranges[:, 1])
    res = ik_frame(generic, model_fk(generic, q))
    err = np.abs(res.q - q)
    assert np.rad2deg(err[generic.rotational]).max() < 0.1
    assert err[~generic.rotational].max() < 5e-4


def test_residual_not_worse_than_start(generic, rng):
    q = random_q(generic, rng)
    target = model_fk(generic, q) + rng.normal(0, 0.01, (len(generic.marker_names), 3))
    start = generic.clamp(q + 0.1)
    res = ik_frame(generic, target, start)
    start_rms = np.sqrt(np.mean(np.sum((model_fk(generic, start) - target) ** 2, 1)))
    assert res.rms <= start_rms


def test_noise_monte_carlo(generic):
    """5 mm marker noise: residual near the noise level, evaluated DOFs within 3 deg."""
    rng = np.random.default_rng(11)
    q = random_q(generic, rng)
    clean = model_fk(generic, q)
    errs, rms = [], []
    for _ in range(100):
        res = ik_frame(generic, clean + rng.normal(0, 0.005, clean.shape), q)
        errs.append(np.abs(res.q - q))
        rms.append(res.rms)
    assert 0.0025 <= np.mean(rms) <= 0.01
    cols = [generic.coordinate_index(n) for n in EVAL_ROTATIONAL]
    per_dof = np.rad2deg(np.mean(errs, axis=0)[cols])
    assert per_dof.max() < 3.0


def test_nan_markers_are_ignored(generic, rng):
    q = random_q(generic, rng)
    target = model_fk(generic, q)
    target[3] = np.nan
    res = ik_frame(generic, target, generic.neutral())
    assert res.rms < 1e-6


def test_ik_sequence_constant_and_deterministic(generic, rng):
    q = random_q(generic, rng)
    traj = np.repeat(model_fk(generic, q)[None], 4, axis=0)
    a = ik_sequence(generic, traj)
    b = ik_sequence(generic, traj)
    assert np.array_equal(a.q, b.q)
    np.testing.assert_allclose(a.q, np.repeat(a.q[:1], 4, 0), atol=1e-9)
    with pytest.raises(ShapeMismatchError):
        ik_sequence(generic, traj[:, :10])


def test_ik_sequence_tracks_fk_motion(generic, rng):
    q0 = random_q(generic, rng)
    qs = np.array([generic.clamp(q0 + 0.02 * k) for k in range(5)])
    res = ik_sequence(generic, np.array([model_fk(generic, q) for q in qs]))
    err = np.abs(res.q - qs)
    assert np.rad2deg(err[:, generic.rotational]).max() < 0.1
    assert err[:, ~generic.rotational].max() < 5e-4


# -- rigid re-expression

def test_moved_rigidly_matches_fk(generic, rng):
    from scipy.spatial.transform import Rotation
    q = np.array([random_q(generic, rng) for _ in range(3)])
    rot = Rotation.from_rotvec([0.05, 0.4, -0.03]).as_matrix()
    trans = np.array([0.3, -0.02, 1.1])
    moved = generic.moved_rigidly(q, rot, trans)
    for a, b in zip(q, moved):
        np.testing.assert_allclose(model_fk(generic, b), model_fk(generic, a) @ rot.T + trans,
                                   atol=1e-12)
