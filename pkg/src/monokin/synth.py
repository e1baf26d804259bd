"""Synthetic ground truth and corrupted monocular input.

Motion is authored in the coordinates of the constrained skeleton: pelvis,
trunk and arm angles come from smooth periodic templates, and each leg is
solved so that the foot follows a prescribed trajectory (flat and fixed on
the floor while in contact). The same motion is then expressed as a body
model pose sequence, projected through a pinhole camera and corrupted with
the failure modes typical of monocular pose estimates.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation

from . import model as body
from .biomech import BiomechModel, scale_model
from .camera import (CameraExtrinsics, CameraIntrinsics, IntrinsicsDatabase,
                     lookup_intrinsics, project)
from .dynamics import GrfFrame, detect_stance, grf_sequence
from .errors import NumericalError, ValidationError
from .model import CONTACT_CHANNELS, BodyShape, PoseSequence, SkeletonTemplate
from .objective import ObservationSet, load_presets, preset_for_activity, segment_bouts
from .refine import RefinementInput

log = logging.getLogger(__name__)

ACTIVITIES = ("walking", "squats", "sts")
LEG_COORDS = ("hip_flexion", "hip_adduction", "hip_rotation", "knee_angle", "ankle_angle",
              "subtalar_angle")
LEG_REACH = 0.985  # hip-ankle distance at full standing, fraction of thigh + shank
STANCE_REACH = 0.99
MAX_REACH = 0.997
FOOT_ANKLE_HEIGHT = 0.05  # ankle above the sole when flat, unscaled
TOE_OUT = np.deg2rad(5.0)
MTP_OFFSET = np.array([0.15, -0.03, 0.0])  # toes joint in the foot frame, unscaled
HEEL_OFF, TOE_OFF = 0.45, 0.62  # gait-cycle fractions from heel strike
PUSH_OFF_PITCH = np.deg2rad(25.0)
STEP = 0.5  # step length per unit scale


class FootPath(NamedTuple):
    rot: np.ndarray  # (F, 3, 3) world foot orientation
    pos: np.ndarray  # (F, 3) ankle position
    heel: np.ndarray  # (F,) heel in contact
    toe: np.ndarray  # (F,) toe in contact
    mtp: np.ndarray  # (F,) toe joint angle


@dataclass(frozen=True)
class Corruption:
    drift: float = 0.0  # m of linear pelvis drift at the last frame
    drift_direction: tuple | None = None  # None: horizontal camera viewing direction
    keypoint_noise_px: float = 0.0
    penetration: float = 0.0  # m, peak sink of the foot in contact
    slide: float = 0.0  # m, peak-to-peak foot slide within a contact bout
    contact_noise: float = 0.0
    shape_offset: tuple = ()  # (index, value) pairs added to the initial shape
    camera_rotation_deg: float = 0.0

    def __post_init__(self):
        for name in ("keypoint_noise_px", "penetration", "slide", "contact_noise",
                     "camera_rotation_deg"):
            if getattr(self, name) < 0:
                raise ValidationError(f"corruption {name} must be >= 0")
        if self.drift_direction is not None:
            d = np.asarray(self.drift_direction, dtype=float)
            if d.shape != (3,) or not np.linalg.norm(d) > 0:
                raise ValidationError("drift_direction must be a nonzero 3-vector")


@dataclass(frozen=True)
class SyntheticScenario:
    activity: str = "walking"
    cycles: int = 2
    frame_rate: float = 30.0
    subject_height: float = 1.75
    mass_kg: float = 70.0
    device: str = "iPhone13,2"
    resolution: tuple = (1080, 1920)
    azimuth_deg: float = 45.0
    distance: float = 3.0
    camera_height: float = 1.2
    corruption: Corruption = field(default_factory=Corruption)
    seed: int = 0

    def __post_init__(self):
        if self.activity not in ACTIVITIES:
            raise ValidationError(f"activity must be one of {ACTIVITIES}")
        if self.cycles < 1:
            raise ValidationError("cycles must be >= 1")
        if not self.frame_rate > 0 or not 0.5 < self.subject_height < 2.5:
            raise ValidationError("frame_rate must be positive and height in (0.5, 2.5) m")
        if not self.mass_kg > 0 or not self.distance > 0:
            raise ValidationError("mass and camera distance must be positive")

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        doc.pop("format_version", None)
        cam = doc.pop("camera", {})
        corr = dict(doc.pop("corruption", {}))
        if corr.get("shape_offset"):
            corr["shape_offset"] = tuple((int(i), float(v)) for i, v in corr["shape_offset"])
        if corr.get("drift_direction") is not None:
            corr["drift_direction"] = tuple(corr["drift_direction"])
        kw = {k: v for k, v in doc.items() if k in cls.__dataclass_fields__}
        if "resolution" in kw:
            kw["resolution"] = tuple(kw["resolution"])
        return cls(azimuth_deg=cam.get("azimuth_deg", 45.0),
                   distance=cam.get("distance", 3.0),
                   camera_height=cam.get("height", 1.2),
                   corruption=Corruption(**corr), **kw)

    def to_dict(self):
        c = self.corruption
        return {
            "format_version": 1, "activity": self.activity, "cycles": self.cycles,
            "frame_rate": self.frame_rate, "subject_height": self.subject_height,
            "mass_kg": self.mass_kg, "device": self.device,
            "resolution": list(self.resolution),
            "camera": {"azimuth_deg": self.azimuth_deg, "distance": self.distance,
                       "height": self.camera_height},
            "seed": self.seed,
            "corruption": {
                "drift": c.drift,
                "drift_direction": None if c.drift_direction is None else list(c.drift_direction),
                "keypoint_noise_px": c.keypoint_noise_px, "penetration": c.penetration,
                "slide": c.slide, "contact_noise": c.contact_noise,
                "shape_offset": [list(p) for p in c.shape_offset],
                "camera_rotation_deg": c.camera_rotation_deg,
            },
        }

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def builtin(cls, name):
        text = resources.files("monokin.data").joinpath("scenarios", f"{name}.json").read_text()
        return cls.from_dict(json.loads(text))

    def without_corruption(self):
        return replace(self, corruption=Corruption())


@dataclass
class SyntheticCase:
    scenario: SyntheticScenario
    template: SkeletonTemplate
    model: BiomechModel  # generic model scaled to the true subject
    shape: BodyShape
    q: np.ndarray  # (F, 33) true coordinates
    poses: PoseSequence
    extrinsics: CameraExtrinsics
    intrinsics: CameraIntrinsics
    keypoints3d: np.ndarray
    markers: np.ndarray
    contact_schedule: np.ndarray  # (F, 4) bool, CONTACT_CHANNELS order
    repetitions: list  # last frame index of each repetition
    grf: list[GrfFrame]
    stance: dict
    input: RefinementInput
    corrupted_q: np.ndarray
    floor_height: float = 0.0

    @property
    def n_frames(self):
        return len(self.q)

    @property
    def body_weight(self):
        return self.scenario.mass_kg * 9.81

    @property
    def true_bouts(self):
        return segment_bouts(self.contact_schedule.astype(float))


# -- motion authoring -------------------------------------------------------------

def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10 - 15 * x + 6 * x * x)


class _Motion:
    """Pelvis/trunk/arm coordinates plus per-side foot targets over time."""

    def __init__(self, model: BiomechModel, scale: float, activity: str, cycles: int,
                 frame_rate: float):
        self.model = model
        self.s = scale
        self.activity = activity
        self.ci = model.coordinate_index
        if activity == "walking":
            self.period = 1.1
        elif activity == "sts":
            self.period = 3.0
        else:
            self.period = 2.5
        n = int(round(cycles * self.period * frame_rate)) + 1
        self.t = np.arange(n) / frame_rate
        self.phase = self.t / self.period
        self.repetitions = [min(int(round((k + 1) * self.period * frame_rate)), n - 1)
                            for k in range(cycles)]

    # joint-angle templates ------------------------------------------------------

    def upper(self):
        q = np.zeros((len(self.t), 33))
        c, ph, d = self.ci, self.phase, np.deg2rad
        w = 2 * np.pi * ph
        if self.activity == "walking":
            q[:, c("pelvis_tilt")] = d(-3.0) + d(1.5) * np.cos(2 * w)
            q[:, c("pelvis_list")] = d(3.0) * np.sin(w)
            q[:, c("pelvis_rotation")] = d(4.0) * np.cos(w)
            q[:, c("lumbar_extension")] = d(-4.0) + d(2.0) * np.cos(2 * w)
            q[:, c("lumbar_bending")] = d(-2.0) * np.sin(w)
            q[:, c("lumbar_rotation")] = d(-3.0) * np.cos(w)
            for side, sgn in (("r", -1.0), ("l", 1.0)):
                q[:, c(f"arm_flex_{side}")] = sgn * d(15.0) * np.cos(w)
                q[:, c(f"arm_add_{side}")] = d(-8.0)
                q[:, c(f"arm_rot_{side}")] = d(5.0)
                q[:, c(f"elbow_flex_{side}")] = d(25.0) - sgn * d(8.0) * np.cos(w)
                q[:, c(f"pro_sup_{side}")] = d(20.0)
        else:
            up = self.rise()
            lean = np.sin(np.pi * up)
            deep = 1.0 - up
            if self.activity == "sts":
                q[:, c("pelvis_tilt")] = d(-30.0) * lean + d(8.0) * deep
                q[:, c("lumbar_extension")] = d(-15.0) * lean - d(5.0) * deep
                arm = d(10.0) + d(25.0) * lean
            else:
                q[:, c("pelvis_tilt")] = d(-25.0) * deep
                q[:, c("lumbar_extension")] = d(-10.0) * deep
                arm = d(10.0) + d(70.0) * deep
            q[:, c("pelvis_list")] = d(1.0) * np.sin(w)
            q[:, c("pelvis_rotation")] = d(2.0) * np.sin(w)
            q[:, c("lumbar_bending")] = d(1.0) * np.sin(w)
            q[:, c("lumbar_rotation")] = d(-1.5) * np.sin(w)
            for side in ("r", "l"):
                q[:, c(f"arm_flex_{side}")] = arm
                q[:, c(f"arm_add_{side}")] = d(-10.0)
                q[:, c(f"arm_rot_{side}")] = d(10.0)
                q[:, c(f"elbow_flex_{side}")] = d(30.0) + d(30.0) * lean
                q[:, c(f"pro_sup_{side}")] = d(30.0)
        return q

    def rise(self):
        """0 at the low point of a repetition, 1 at full standing."""
        if self.activity == "sts":
            return 0.5 - 0.5 * np.cos(2 * np.pi * self.phase)  # starts seated
        return 0.5 + 0.5 * np.cos(2 * np.pi * self.phase)  # starts standing

    def pelvis_xz_and_bob(self):
        """Horizontal pelvis path and the height variation about its base value."""
        s, ph = self.s, self.phase
        if self.activity == "walking":
            x = self.velocity * self.t
            z = 0.02 * s * np.cos(2 * np.pi * (ph - 0.3))
            bob = np.zeros_like(ph)
        elif self.activity == "sts":
            up = self.rise()
            x = s * (-0.40 + 0.42 * up)
            z = np.zeros_like(ph)
            bob = -s * 0.42 * (1.0 - up)
        else:
            up = self.rise()
            x = -0.15 * s * (1.0 - up)
            z = np.zeros_like(ph)
            bob = -0.32 * s * (1.0 - up)
        return x, z, bob

    # foot trajectories ----------------------------------------------------------

    @property
    def step(self):
        return STEP * self.s

    @property
    def velocity(self):
        return 2 * self.step / self.period

    def feet(self):
        """Per side: foot rotations, ankle positions, heel/toe contact and MTP angle."""
        n = len(self.t)
        s = self.s
        ankle_y = FOOT_ANKLE_HEIGHT * s
        mtp_local = s * MTP_OFFSET
        out = {}
        for side, sgn in (("r", 1.0), ("l", -1.0)):
            yaw = Rotation.from_euler("y", -sgn * TOE_OUT)
            rot = np.empty((n, 3, 3))
            pos = np.empty((n, 3))
            heel = np.ones(n, dtype=bool)
            toe = np.ones(n, dtype=bool)
            mtp = np.zeros(n)
            if self.activity != "walking":
                width = 0.12 * s if self.activity == "sts" else 0.16 * s
                rot[:] = yaw.as_matrix()
                pos[:] = [0.0, ankle_y, sgn * width]
                out[side] = FootPath(rot, pos, heel, toe, mtp)
                continue
            offset = 0.0 if side == "r" else 0.5  # phase of heel strike
            z = sgn * 0.09 * s

            def pose(x_strike, pitch):
                """Foot pose pitched about a fixed MTP point of a flat foot at ``x_strike``."""
                flat = np.array([x_strike, ankle_y, z])
                pivot = flat + yaw.apply(mtp_local)
                r = yaw * Rotation.from_euler("z", pitch)
                return r.as_matrix(), pivot - r.apply(mtp_local)

            for f, ph in enumerate(self.phase):
                k = np.floor(ph - offset)
                u = ph - offset - k  # 0 at heel strike
                x_strike = self.step / 2 + (2 * k + 2 * offset) * self.step
                if u < HEEL_OFF:
                    rot[f], pos[f] = pose(x_strike, 0.0)
                elif u < TOE_OFF:
                    pitch = -PUSH_OFF_PITCH * _smoothstep((u - HEEL_OFF) / (TOE_OFF - HEEL_OFF))
                    rot[f], pos[f] = pose(x_strike, pitch)
                    heel[f] = False
                    mtp[f] = -pitch
                else:
                    heel[f] = toe[f] = False
                    v = (u - TOE_OFF) / (1 - TOE_OFF)
                    sv = _smoothstep(v)
                    r0, p0 = pose(x_strike, -PUSH_OFF_PITCH)
                    _, p1 = pose(x_strike + 2 * self.step, 0.0)
                    pitch = -PUSH_OFF_PITCH * (1 - sv)
                    rot[f] = (yaw * Rotation.from_euler("z", pitch)).as_matrix()
                    pos[f] = p0 + (p1 - p0) * sv + [0.0, 0.07 * s * np.sin(np.pi * v), 0.0]
                    mtp[f] = -pitch
            out[side] = FootPath(rot, pos, heel, toe, mtp)
        return out


def _leg_indices(model, side):
    return np.array([model.coordinate_index(f"{n}_{side}") for n in LEG_COORDS])


def solve_leg(model: BiomechModel, q, side, foot_rot, foot_pos, x0=None, tol=1e-9):
    """Hip, knee and ankle coordinates placing the foot frame exactly at the target."""
    idx = _leg_indices(model, side)
    foot = model.segment_index(f"{side}_foot")
    lo, hi = model.ranges[idx, 0], model.ranges[idx, 1]
    q = np.array(q, dtype=float)

    def resid(v):
        qq = q.copy()
        qq[idx] = v
        r, o = model.segment_frame(qq, foot)
        err = Rotation.from_matrix(foot_rot.T @ r).as_rotvec()
        return np.concatenate([o - foot_pos, 0.1 * err])

    start = q[idx] if x0 is None else np.clip(x0, lo, hi)
    sol = least_squares(resid, start, bounds=(lo, hi), xtol=1e-12, ftol=1e-14, gtol=1e-14)
    if np.max(np.abs(sol.fun)) > tol:
        raise NumericalError(f"{side} foot target unreachable "
                             f"(residual {np.max(np.abs(sol.fun)):.2e})")
    q[idx] = sol.x
    return q


def _hip_centres(model, q_upper):
    femur = [model.segment_index("r_femur"), model.segment_index("l_femur")]
    out = np.empty((len(q_upper), 2, 3))
    for f, q in enumerate(q_upper):
        _, o = model.segment_frames(q)
        out[f] = o[femur]
    return out


def _place_pelvis(model, motion: _Motion, q_upper, feet):
    """Pelvis height from leg reach.

    Walking sets the height frame by frame so the supporting leg sits at
    ``STANCE_REACH`` of its length (a compass-like vertical excursion);
    squats and sit-to-stand use one base height under a prescribed profile.
    """
    x, z, bob = motion.pelvis_xz_and_bob()
    c = model.coordinate_index
    thigh = model.scales[model.segment_index("r_femur")] * np.linalg.norm(
        model.offsets[model.segment_index("r_tibia")])
    shank = model.scales[model.segment_index("r_tibia")] * np.linalg.norm(
        model.offsets[model.segment_index("r_foot")])
    length = thigh + shank
    q = q_upper.copy()
    q[:, c("pelvis_tx")] = x
    q[:, c("pelvis_tz")] = z
    q[:, c("pelvis_ty")] = bob
    hips0 = _hip_centres(model, q)  # pelvis translation enters additively
    ankles = np.stack([feet["r"].pos, feet["l"].pos], axis=1)
    rel = ankles - hips0
    horiz = np.linalg.norm(rel[..., [0, 2]], axis=2)

    def height_for(reach):
        return rel[..., 1] + np.sqrt(np.maximum((reach * length) ** 2 - horiz ** 2, 0.0))

    if motion.activity == "walking":
        support = np.stack([feet["r"].heel | feet["r"].toe, feet["l"].heel | feet["l"].toe], 1)
        h = np.where(support, height_for(STANCE_REACH), np.inf).min(axis=1)
        h = gaussian_filter1d(h, 2.0, mode="nearest")
        h = np.minimum(h, height_for(MAX_REACH).min(axis=1))
    else:
        h = height_for(LEG_REACH).min()
    q[:, c("pelvis_ty")] = bob + h
    return q


def author_motion(model: BiomechModel, scale: float, activity: str, cycles: int,
                  frame_rate: float):
    """Returns (q, feet targets, repetition end frames)."""
    motion = _Motion(model, scale, activity, cycles, frame_rate)
    feet = motion.feet()
    upper = motion.upper()
    for side in ("r", "l"):
        upper[:, model.coordinate_index(f"mtp_angle_{side}")] = feet[side].mtp
    q = _place_pelvis(model, motion, upper, feet)
    q = solve_legs(model, q, feet)
    return q, feet, motion.repetitions


def solve_legs(model, q, feet):
    out = q.copy()
    prev = {}
    for f in range(len(q)):
        for side in ("r", "l"):
            rot, pos = feet[side].rot, feet[side].pos
            target = pos[f]
            guess = prev.get(side)
            if guess is None:
                guess = np.deg2rad([20.0, 0.0, 0.0, 30.0, 0.0, 0.0])
            out[f] = solve_leg(model, out[f], side, rot[f], target, guess)
            prev[side] = out[f, _leg_indices(model, side)]
    return out


# -- conversion to the body model ------------------------------------------------

def coordinates_to_poses(model: BiomechModel, q_traj, shape: BodyShape,
                         template: SkeletonTemplate, frame_rate: float) -> PoseSequence:
    """Express skeleton coordinates as body-model joint rotations.

    Segments missing from the skeleton (the head) stay rigid to their parent.
    The root translation is set so the two pelvis origins coincide.
    """
    rest = body.forward_kinematics(shape, template.default_pose(), template)
    root_rest = rest.origins[0] - template.default_pose().root_translation
    lookup = {n: i for i, n in enumerate(model.segment_names)}
    n_frames = len(q_traj)
    jr = np.zeros((n_frames, template.n_joints, 3))
    tr = np.empty((n_frames, 3))
    ro = np.empty((n_frames, 3))
    for f, q in enumerate(q_traj):
        rots, origins = model.segment_frames(q)
        world = [None] * template.n_segments
        for i in template.order:
            name = template.segment_names[i]
            if name in lookup:
                world[i] = rots[lookup[name]]
            else:
                world[i] = world[template.parents[i]]
            if i > 0:
                rel = world[template.parents[i]].T @ world[i]
                jr[f, i - 1] = Rotation.from_matrix(rel).as_rotvec()
        root = lookup[template.segment_names[0]]
        ro[f] = Rotation.from_matrix(rots[root]).as_rotvec()
        tr[f] = origins[root] - root_rest
    return PoseSequence(jr, tr, ro, frame_rate)


# -- camera and observations -------------------------------------------------------

def place_camera(scenario: SyntheticScenario, pelvis_path) -> CameraExtrinsics:
    centre = pelvis_path.mean(axis=0)
    az = np.deg2rad(scenario.azimuth_deg)
    eye = centre + scenario.distance * np.array([np.cos(az), 0.0, np.sin(az)])
    eye[1] = scenario.camera_height
    target = np.array([centre[0], 0.9 * scenario.subject_height / 1.75, centre[2]])
    return CameraExtrinsics.look_at(eye, target)


def _project_all(points, intr, extr):
    flat = points.reshape(-1, 3)
    return np.array([project(p, intr, extr) for p in flat]).reshape(points.shape[:-1] + (2,))


def contact_schedule(feet) -> np.ndarray:
    """(F, 4) heel and toe contact flags in channel order."""
    cols = {"l_heel": feet["l"].heel, "r_heel": feet["r"].heel, "l_toe": feet["l"].toe,
            "r_toe": feet["r"].toe}
    return np.stack([cols[c] for c in CONTACT_CHANNELS], axis=1)


def root_corruption(n_frames, period_frames, corr: Corruption, drift_dir, forward):
    """(F, 3) pelvis offsets: linear drift, a periodic sink and a periodic slide."""
    f = np.arange(n_frames)
    ramp = f / max(n_frames - 1, 1)
    cyc = 2 * np.pi * f / period_frames
    off = corr.drift * ramp[:, None] * drift_dir
    off[:, 1] -= corr.penetration * (0.5 - 0.5 * np.cos(cyc))
    off += 0.5 * corr.slide * np.sin(cyc)[:, None] * forward
    return off


def _contact_probabilities(schedule, noise, rng):
    # a frame reads as contact only when both neighbours are in contact too, so
    # central-difference foot velocities vanish on every flagged frame
    padded = np.pad(schedule, ((1, 1), (0, 0)), mode="edge")
    schedule = padded[1:-1] & padded[:-2] & padded[2:]
    p = schedule.astype(float)
    if noise > 0:
        jitter = np.abs(rng.normal(0.0, noise, p.shape))
        p = np.clip(np.where(schedule, 1.0 - jitter, jitter), 0.0, 1.0)
    return p


def synth_generate(scenario: SyntheticScenario, template: SkeletonTemplate | None = None,
                   generic: BiomechModel | None = None, presets=None,
                   intrinsics_db: IntrinsicsDatabase | None = None) -> SyntheticCase:
    template = template or body.default_template()
    generic = generic or BiomechModel.load()
    rng = np.random.default_rng(scenario.seed)
    corr = scenario.corruption
    fr = scenario.frame_rate

    shape = body.shape_for_height(scenario.subject_height, template)
    subject = scale_model(body.static_markers(shape, template), generic)
    scale = float(np.mean(subject.scales))
    q, feet, reps = author_motion(subject, scale, scenario.activity, scenario.cycles, fr)
    poses = coordinates_to_poses(subject, q, shape, template, fr)
    _, kp3d, markers = body.sequence_positions(shape, poses, template)

    db = intrinsics_db or IntrinsicsDatabase.load()
    intr = lookup_intrinsics(db, scenario.device, scenario.resolution)
    extr = place_camera(scenario, q[:, :3])
    uv = _project_all(kp3d, intr, extr)
    if corr.keypoint_noise_px > 0:
        uv = uv + rng.normal(0.0, corr.keypoint_noise_px, uv.shape)
    schedule = contact_schedule(feet)
    obs = ObservationSet(uv, np.ones(uv.shape[:2]),
                         _contact_probabilities(schedule, corr.contact_noise, rng),
                         fr, scenario.subject_height)

    # corrupted initial estimate: rigid pelvis offsets, joint angles untouched
    if corr.drift_direction is None:
        drift_dir = poses.root_translation[0] - extr.center
        drift_dir[1] = 0.0
    else:
        drift_dir = np.asarray(corr.drift_direction, dtype=float)
    drift_dir = drift_dir / np.linalg.norm(drift_dir)
    period_frames = _Motion(subject, scale, scenario.activity, 1, fr).period * fr
    off = root_corruption(len(q), period_frames, corr, drift_dir, np.array([1.0, 0.0, 0.0]))
    q0 = q.copy()
    q0[:, :3] += off
    poses0 = replace(poses, root_translation=poses.root_translation + off)
    beta0 = shape.coeffs.copy()
    for i, v in corr.shape_offset:
        beta0[i] += v
    extr0 = extr
    if corr.camera_rotation_deg:
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        delta = Rotation.from_rotvec(np.deg2rad(corr.camera_rotation_deg) * axis)
        rot0 = (delta * Rotation.from_rotvec(extr.rotation))
        # rotate about the camera centre so only the orientation is wrong
        r0 = rot0.as_matrix()
        extr0 = CameraExtrinsics(rot0.as_rotvec(), -r0 @ extr.center)

    presets = presets or load_presets()
    inp = RefinementInput(poses=poses0, shape=BodyShape(beta0, reference_coeffs=beta0),
                          extrinsics=extr0, observations=obs, intrinsics=intr,
                          preset=preset_for_activity(presets, scenario.activity))
    grf = grf_sequence(subject, q, 0.0, fr)
    return SyntheticCase(
        scenario=scenario, template=template, model=subject, shape=shape, q=q, poses=poses,
        extrinsics=extr, intrinsics=intr, keypoints3d=kp3d, markers=markers,
        contact_schedule=schedule, repetitions=reps, grf=grf, stance=detect_stance(grf),
        input=inp, corrupted_q=q0,
    )
