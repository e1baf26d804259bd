"""Acceptance suite. Each test checks one criterion at its stated tolerance
and records a PASS/FAIL line shown at the end of the pytest run."""

import filecmp
import json
import time
from dataclasses import replace

import numpy as np
import pytest
import torch
from scipy.spatial.transform import Rotation

from conftest import record_criterion
from monokin import cli
from monokin import model as body
from monokin.biomech import BiomechModel, ik_frame, model_fk, scale_model
from monokin.camera import project_torch
from monokin.dynamics import ContactSphere, sphere_force
from monokin.objective import (ObservationSet, Stage1Problem, Stage2Problem, l_beta, l_flat,
                               l_foot_slide, l_foot_vel, l_height, l_repr, load_presets,
                               segment_bouts)
from monokin.pipeline import run_case
from monokin.refine import gradient
from monokin.synth import Corruption, SyntheticScenario, synth_generate


@pytest.fixture(scope="module")
def walking_case():
    return synth_generate(SyntheticScenario.builtin("walking"))


# -- 1 ---------------------------------------------------------------------------------

def _worst_fd_error(prob, x):
    g = gradient(prob, x)
    floor = 1e-8 * np.max(np.abs(g))
    worst = 0.0
    for i in range(x.size):
        h = 1e-5 * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        with torch.no_grad():
            fd = (float(prob(torch.as_tensor(xp))) - float(prob(torch.as_tensor(xm)))) / (2 * h)
        worst = max(worst, abs(fd - g[i]) / max(abs(fd), abs(g[i]), floor))
    return worst


def test_criterion_01_gradients(walking_case):
    t0 = time.perf_counter()
    case = walking_case
    frames = slice(12, 20)  # a window with touchdowns, lift-offs and full bouts
    o = case.input.observations
    obs = ObservationSet(o.keypoints[frames], o.confidences[frames], o.contacts[frames],
                         o.frame_rate, o.subject_height)
    p = case.poses
    poses = body.PoseSequence(p.joint_rotations[frames], p.root_translation[frames],
                              p.root_orientation[frames], p.frame_rate)
    preset = case.input.preset
    bouts = segment_bouts(obs.contacts)
    assert bouts
    rng = np.random.default_rng(7)
    p1 = Stage1Problem(case.template, poses, obs, case.intrinsics, preset, case.shape.coeffs)
    p2 = Stage2Problem(case.template, case.shape, obs, case.intrinsics, preset,
                       case.extrinsics, bouts)
    x1 = p1.pack(case.shape, case.extrinsics)
    x2 = p2.pack(poses, case.extrinsics)
    worst1 = max(_worst_fd_error(p1, x1 + rng.normal(0, 0.05, x1.size)) for _ in range(10))
    worst2 = max(_worst_fd_error(p2, x2 + rng.normal(0, 0.05, x2.size)) for _ in range(10))
    elapsed = time.perf_counter() - t0
    ok = worst1 <= 1e-4 and worst2 <= 1e-4 and elapsed < 60
    record_criterion(1, "gradient correctness", ok,
                     f"max rel err stage1 {worst1:.2e}, stage2 {worst2:.2e}, {elapsed:.1f} s")
    assert ok


# -- 2 ---------------------------------------------------------------------------------

def test_criterion_02_zero_cases(template, intrinsics, front_camera):
    rng = np.random.default_rng(2)
    seq_kp = torch.as_tensor(rng.normal(0, 0.3, (5, template.n_keypoints, 3)) + [0, 1, 0])
    uv, behind = project_torch(seq_kp, intrinsics, torch.as_tensor(front_camera.rotation),
                               torch.as_tensor(front_camera.translation))
    beta = rng.normal(0, 1, 10)
    still = np.tile(rng.normal(size=(1, 4, 3)), (9, 1, 1))
    bouts = [b for b in segment_bouts(np.ones((9, 4)))]
    values = {
        "l_repr": l_repr(uv, uv.clone(), rng.uniform(size=uv.shape[:2]), behind),
        "l_beta": l_beta(beta, beta.copy()),
        "l_foot_vel": l_foot_vel(still, np.ones((9, 4)), 30.0),
        "l_foot_slide": l_foot_slide(still, bouts),
        "l_flat": l_flat(np.where(np.arange(3) == 1, 0.02, still), bouts),
        "l_height": l_height(beta, body.model_height(beta, template), template),
    }
    nonzero = {k: float(v) for k, v in values.items() if float(v) != 0.0}
    ok = not nonzero
    record_criterion(2, "loss zero cases", ok,
                     "all six terms exactly 0" if ok else f"non-zero: {nonzero}")
    assert ok


# -- 3 ---------------------------------------------------------------------------------

def test_criterion_03_drift_recovery():
    t0 = time.perf_counter()
    scenario = SyntheticScenario.builtin("sts")
    assert scenario.cycles == 5 and scenario.corruption.drift == 0.5
    assert scenario.corruption.keypoint_noise_px == 0.0
    case = synth_generate(scenario)
    _, rep = run_case(case)
    final = rep.drift_curve[-1] / 100.0
    elapsed = time.perf_counter() - t0
    ok = final <= 0.05 and elapsed < 300
    record_criterion(3, "drift recovery", ok,
                     f"final-repetition drift {100 * final:.2f} cm (injected 50 cm), "
                     f"{elapsed:.0f} s")
    assert ok


# -- 4 ---------------------------------------------------------------------------------

def test_criterion_04_foot_floor():
    base = SyntheticScenario.builtin("walking")
    scenario = replace(base, corruption=replace(base.corruption, keypoint_noise_px=0.0))
    assert scenario.corruption.penetration == 0.02 and scenario.corruption.slide == 0.05
    case = synth_generate(scenario)
    _, rep = run_case(case)
    pen = rep.extras["max_bout_penetration_m"]
    disp = rep.extras["max_bout_displacement_m"]
    ok = pen <= 0.005 and disp <= 0.01
    record_criterion(4, "foot-floor plausibility", ok,
                     f"max in-bout penetration {1e3 * pen:.1f} mm, "
                     f"max in-bout displacement {1e3 * disp:.1f} mm "
                     f"over {len(rep.extras['bout_displacement_m'])} bouts")
    assert ok


# -- 5 ---------------------------------------------------------------------------------

def _spline_error(model, q):
    """Knee rotation rebuilt from the splines with scipy, against the model FK."""
    worst = 0.0
    rots, _ = model.segment_frames(q)
    for seg in sorted({t.segment for t in model.coupled_transforms()}):
        chain = [t for t in model.transforms if t.segment == seg]
        rel = Rotation.identity()
        for t in chain:
            v = t.spline(q[t.coordinate]) if t.spline is not None else q[t.coordinate]
            rel = rel * Rotation.from_rotvec(t.axis * float(v))
        expected = rots[model.parents[seg]] @ rel.as_matrix()
        worst = max(worst, np.abs(expected - rots[seg]).max())
    return worst


def test_criterion_05_fk_ik_round_trip(generic):
    rng = np.random.default_rng(5)
    rot = generic.rotational
    worst_deg = worst_mm = worst_spline = 0.0
    failures = 0
    for _ in range(100):
        q = rng.uniform(generic.ranges[:, 0], generic.ranges[:, 1])
        res = ik_frame(generic, model_fk(generic, q))
        err = np.abs(res.q - q)
        deg = np.rad2deg(err[rot]).max()
        mm = 1e3 * err[~rot].max()
        worst_deg, worst_mm = max(worst_deg, deg), max(worst_mm, mm)
        worst_spline = max(worst_spline, _spline_error(generic, res.q))
        failures += deg > 0.1 or mm > 0.5
    ok = failures == 0 and worst_spline <= 1e-12
    record_criterion(5, "FK-IK round trip", ok,
                     f"{100 - failures}/100 recovered, worst {worst_deg:.2e} deg / "
                     f"{worst_mm:.2e} mm, spline residual {worst_spline:.1e}")
    assert ok


# -- 6 ---------------------------------------------------------------------------------

def test_criterion_06_scaling_identity(generic):
    markers = model_fk(generic, generic.neutral())
    same = scale_model(markers, generic).scales
    bigger = scale_model(1.1 * markers, generic).scales
    e1 = np.abs(same - 1.0).max()
    e2 = np.abs(bigger - 1.1).max()
    ok = e1 <= 1e-9 and e2 <= 1e-6
    record_criterion(6, "scaling identity", ok,
                     f"max |s - 1| {e1:.1e}, max |s - 1.1| {e2:.1e}")
    assert ok


# -- 7 ---------------------------------------------------------------------------------

def test_criterion_07_end_to_end(walking_case):
    t0 = time.perf_counter()
    assert walking_case.scenario.corruption.keypoint_noise_px == 2.0
    _, rep = run_case(walking_case)
    elapsed = time.perf_counter() - t0
    ok = rep.rotational_mean <= 2.0 and rep.translational_mean <= 2.0 and elapsed < 600
    record_criterion(7, "end-to-end synthetic accuracy", ok,
                     f"rotational MAE {rep.rotational_mean:.2f} deg, translational MAE "
                     f"{rep.translational_mean:.2f} cm, {elapsed:.0f} s")
    assert ok


# -- 8 ---------------------------------------------------------------------------------

def _closed_form(delta, delta_dot, vt, s):
    fn = s.stiffness * max(delta, 0.0) ** 1.5 * (1 + 1.5 * s.dissipation * delta_dot)
    fn = max(fn, 0.0)
    speed = np.hypot(*vt)
    if speed == 0:
        return np.array([0.0, fn, 0.0])
    x = speed / s.transition_velocity
    mu = ((s.dynamic_friction + (s.static_friction - s.dynamic_friction) / np.cosh(x))
          * np.tanh(x) + s.viscous_friction * x / (1 + x))
    return np.array([-mu * fn * vt[0] / speed, fn, -mu * fn * vt[1] / speed])


def test_criterion_08_contact_model():
    rng = np.random.default_rng(8)
    hard = ContactSphere("r", 0, np.zeros(3), smoothing=0.0)
    soft = ContactSphere("r", 0, np.zeros(3))
    worst_rel = 0.0
    worst_ratio = 0.0
    for _ in range(1000):
        d = rng.uniform(-0.01, 0.03)
        dd = rng.uniform(-0.5, 0.5)
        vt = rng.normal(0, 0.5, 2)
        got = sphere_force(d, dd, vt, hard)
        want = _closed_form(d, dd, vt, hard)
        scale = np.linalg.norm(want)
        worst_rel = max(worst_rel, np.linalg.norm(got - want) / scale if scale else
                        np.linalg.norm(got))
        f = sphere_force(d, dd, vt, soft)
        if f[1] > 0:
            worst_ratio = max(worst_ratio, np.hypot(f[0], f[2]) / (soft.mu_max * f[1]))
    # continuity across delta = 0: the jump over [-h, h] is bounded by the steepest
    # slope the smoothing allows, so it shrinks linearly with h
    w = soft.smoothing * soft.radius
    jumps_ok = True
    jumps = []
    for h in (1e-3, 1e-4, 1e-5, 1e-6, 1e-8):
        jump = abs(sphere_force(h, 0.1, [0.1, 0], soft)[1]
                   - sphere_force(-h, 0.1, [0.1, 0], soft)[1])
        slope = 1.5 * soft.stiffness * np.sqrt(w * np.logaddexp(0, h / w)) * (1 + 0.15 * soft.dissipation)
        jumps_ok &= jump <= 2 * h * slope
        jumps.append(jump)
    ok = worst_rel <= 1e-9 and worst_ratio <= 1.0 and jumps_ok
    record_criterion(8, "contact model", ok,
                     f"closed-form rel err {worst_rel:.1e}, max |Ft|/(mu_max Fn) "
                     f"{worst_ratio:.3f}, jump over +/-1e-8 m {jumps[-1]:.1e} N")
    assert ok


# -- 9 ---------------------------------------------------------------------------------

def test_criterion_09_presets():
    expected = {
        "walking": (6, 50, 1, 100, 10, 100),
        "squats": (4, 50, 1, 100, 10, 10),
        "sts": (4, 250, 1, 100, 10, 50),
        "other": (8, 50, 1, 100, 10, None),
    }
    presets = load_presets()
    got = {k: (p.filter_cutoff_hz, p.w_r, p.w_v, p.w_s, p.w_sm, p.w_f)
           for k, p in presets.items() if k in expected}
    ok = got == expected
    record_criterion(9, "preset fidelity", ok, "all four presets match" if ok else str(got))
    assert ok


# -- 10 --------------------------------------------------------------------------------

def _same_tree(a, b):
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    if files_a != files_b:
        return False, len(files_a)
    _, mismatch, errors = filecmp.cmpfiles(a, b, [str(p) for p in files_a], shallow=False)
    return not mismatch and not errors, len(files_a)


def test_criterion_10_determinism(tmp_path):
    scenario = SyntheticScenario.builtin("walking")
    doc = replace(scenario, cycles=1).to_dict()
    (tmp_path / "scenario.json").write_text(json.dumps(doc))
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main(["--seed", "3", "synth", "--scenario", str(tmp_path / "scenario.json"),
                         "--out", str(out / "synth")]) == 0
        assert cli.main(["--seed", "3", "refine", "--input", str(out / "synth" / "input"),
                         "--out", str(out / "refined")]) == 0
        runs.append(out)
    ok_s, n_s = _same_tree(runs[0] / "synth", runs[1] / "synth")
    ok_r, n_r = _same_tree(runs[0] / "refined", runs[1] / "refined")
    ok = ok_s and ok_r and n_s > 0 and n_r > 0
    record_criterion(10, "determinism", ok,
                     f"synth {n_s} files {'identical' if ok_s else 'DIFFER'}, "
                     f"refine {n_r} files {'identical' if ok_r else 'DIFFER'}")
    assert ok
