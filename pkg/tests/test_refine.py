import warnings
from dataclasses import replace

import numpy as np
import pytest

from monokin import model as body
from monokin.camera import project
from monokin.errors import NumericalError, ParameterError, ShapeMismatchError
from monokin.objective import ObservationSet, Stage1Problem, load_presets, preset_for_activity
from monokin.optim import OptimizerConfig
from monokin.refine import (RefinementInput, gradient, lowpass, refine, run_stage1,
                            run_stage2)
from monokin.synth import Corruption, SyntheticScenario, synth_generate


def scenario(activity="walking", **corruption):
    return replace(SyntheticScenario.builtin(activity), cycles=1,
                   corruption=Corruption(**corruption))


@pytest.fixture(scope="module")
def clean_walk():
    return synth_generate(scenario())


@pytest.fixture(scope="module")
def clean_sts():
    return synth_generate(scenario("sts"))


def truncated(inp, n):
    o, p = inp.observations, inp.poses
    obs = ObservationSet(o.keypoints[:n], o.confidences[:n], o.contacts[:n], o.frame_rate,
                         o.subject_height)
    poses = body.PoseSequence(p.joint_rotations[:n], p.root_translation[:n],
                              p.root_orientation[:n], p.frame_rate)
    return replace(inp, observations=obs, poses=poses)


# -- lowpass

def test_lowpass_constant_unchanged():
    x = np.full((90, 4), 3.7)
    np.testing.assert_allclose(lowpass(x, 6, 30), x, atol=1e-9)


@pytest.mark.parametrize("ratio, check", [(0.1, lambda a: abs(a - 1) < 0.02),
                                          (3.0, lambda a: a < 0.1)])
def test_lowpass_frequency_response(ratio, check):
    fs, cutoff = 100.0, 4.0
    t = np.arange(2000) / fs
    y = lowpass(np.sin(2 * np.pi * ratio * cutoff * t), cutoff, fs)
    mid = y[500:1500]
    assert check(np.max(np.abs(mid)))


def test_lowpass_rejects_cutoff_above_nyquist():
    with pytest.raises(ParameterError):
        lowpass(np.zeros((10, 2)), 15.0, 30.0)


# -- input checks

def test_frame_count_mismatch(clean_walk):
    inp = clean_walk.input
    with pytest.raises(ShapeMismatchError):
        replace(inp, poses=truncated(inp, 10).poses)


def test_sts_preset_selected():
    assert preset_for_activity(load_presets(), "sts").w_r == 250
    assert preset_for_activity(load_presets(), "jumping").name == "other"


def test_gradient_reports_non_finite_index(clean_walk):
    class Bad(Stage1Problem):
        def __call__(self, x):
            return super().__call__(x) * 0 + (x[3] ** 0.5)
    inp = clean_walk.input
    prob = Bad(clean_walk.template, inp.poses, inp.observations, inp.intrinsics, inp.preset,
               inp.shape.coeffs)
    x = prob.pack(inp.shape, inp.extrinsics)
    x[3] = 0.0
    with pytest.raises(NumericalError, match="index 3"):
        gradient(prob, x)


# -- stage 1

def test_stage1_at_optimum_stays_put(clean_walk):
    shape, extr, res = run_stage1(clean_walk.input)
    assert res.n_iter <= 2
    np.testing.assert_allclose(shape.coeffs, clean_walk.shape.coeffs, atol=1e-9)
    np.testing.assert_allclose(extr.vector, clean_walk.extrinsics.vector, atol=1e-9)


def test_stage1_recovers_height_from_shape_offset():
    case = synth_generate(scenario(shape_offset=((0, 0.5),)))
    start = body.model_height(case.input.shape, case.template)
    shape, _, res = run_stage1(case.input)
    assert abs(start - 1.75) > 0.02
    assert body.model_height(shape, case.template) == pytest.approx(1.75, abs=5e-3)
    assert res.trace[-1] <= res.trace[0]


def test_stage1_recovers_camera_rotation():
    case = synth_generate(scenario(camera_rotation_deg=2.0))
    inp = case.input
    shape, extr, _ = run_stage1(inp)
    _, kp, _ = body.sequence_positions(shape, inp.poses, case.template)
    uv = np.array([[project(p, inp.intrinsics, extr) for p in fr] for fr in kp])
    rms = np.sqrt(np.mean(np.sum((uv - inp.observations.keypoints) ** 2, -1)))
    assert rms < 1.0


# -- stage 2 and the full driver

def test_ground_truth_is_left_alone(clean_sts):
    res = refine(clean_sts.input)
    dr = np.rad2deg(np.abs(res.poses.joint_rotations - clean_sts.poses.joint_rotations).max())
    dt = np.abs(res.poses.root_translation - clean_sts.poses.root_translation).max()
    assert dr < 0.1 and dt < 1e-3


def test_traces_monotone_and_shape_fixed(clean_walk):
    inp = replace(truncated(clean_walk.input, 12),
                  poses=body.PoseSequence(clean_walk.input.poses.joint_rotations[:12] + 0.02,
                                          clean_walk.input.poses.root_translation[:12] + 0.05,
                                          clean_walk.input.poses.root_orientation[:12],
                                          30.0))
    cfg = OptimizerConfig(max_iter=60)
    shape, extr, r1 = run_stage1(inp, cfg)
    res = run_stage2(inp, shape, extr, cfg)
    for trace in (r1.trace, res.stage2_trace):
        assert all(b <= a for a, b in zip(trace[1:], trace[2:]))
        assert trace[-1] <= trace[0]
    assert res.shape.coeffs.tobytes() == shape.coeffs.tobytes()


def test_refine_is_deterministic(clean_walk):
    inp = truncated(clean_walk.input, 10)
    cfg = OptimizerConfig(max_iter=40, seed=4)
    a, b = refine(inp, cfg), refine(inp, cfg)
    assert a.poses.joint_rotations.tobytes() == b.poses.joint_rotations.tobytes()
    assert a.markers.tobytes() == b.markers.tobytes()
    assert a.stage2_trace == b.stage2_trace and a.status == b.status


def test_cross_frame_sensitivity(clean_walk):
    inp = truncated(clean_walk.input, 10)
    cfg = OptimizerConfig(max_iter=40)
    base = refine(inp, cfg)
    kp = inp.observations.keypoints.copy()
    kp[5] += 8.0
    moved = refine(replace(inp, observations=replace(inp.observations, keypoints=kp)), cfg)
    other = [0, 1, 2, 8, 9]
    diff = np.abs(moved.poses.root_translation[other] - base.poses.root_translation[other])
    assert diff.max() > 1e-6


def test_blind_input_warns_and_runs(clean_walk):
    inp = truncated(clean_walk.input, 8)
    obs = replace(inp.observations, confidences=np.zeros_like(inp.observations.confidences))
    with pytest.warns(RuntimeWarning, match="confidences are zero"):
        res = refine(replace(inp, observations=obs), OptimizerConfig(max_iter=10))
    assert np.all(np.isfinite(res.poses.root_translation))


def test_refined_markers_are_filtered(clean_walk):
    inp = truncated(clean_walk.input, 16)
    res = refine(inp, OptimizerConfig(max_iter=20))
    _, _, raw = body.sequence_positions(res.shape, res.poses, clean_walk.template)
    assert res.markers.shape == raw.shape
    np.testing.assert_allclose(res.markers, lowpass(raw.reshape(16, -1), 6.0, 30.0).reshape(raw.shape))
    assert res.static_markers.shape == (body.N_MARKERS, 3)
