"""Accuracy metrics against synthetic ground truth."""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .camera import CameraExtrinsics
from .errors import ParameterError, SchemaError, ShapeMismatchError

log = logging.getLogger(__name__)

EVAL_ROTATIONAL = (
    "ankle_angle_r", "subtalar_angle_r", "ankle_angle_l", "subtalar_angle_l",
    "knee_angle_r", "knee_angle_l",
    "hip_flexion_r", "hip_adduction_r", "hip_rotation_r",
    "hip_flexion_l", "hip_adduction_l", "hip_rotation_l",
    "pelvis_tilt", "pelvis_list", "pelvis_rotation",
    "lumbar_extension", "lumbar_bending", "lumbar_rotation",
)
EVAL_TRANSLATIONAL = ("pelvis_tx", "pelvis_ty", "pelvis_tz")
GRF_AXES = ("x", "y", "z")


@dataclass
class EvalReport:
    rotational: dict  # DOF -> deg
    rotational_mean: float
    translational: dict  # DOF -> cm
    translational_mean: float
    drift_curve: list  # cm at the end of each repetition
    grf: dict | None  # axis -> % body weight, None without stance frames
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = [*self.rotational.values(), *self.translational.values(), *self.drift_curve]
        if self.grf:
            vals += list(self.grf.values())
        if any(v < 0 for v in vals):
            raise ParameterError("metrics must be non-negative")

    def to_dict(self):
        return asdict(self)


def _columns(values, names, dofs):
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[1] != len(names):
        raise ShapeMismatchError("coordinate table must be (frames, len(names))")
    index = {n: i for i, n in enumerate(names)}
    missing = [d for d in dofs if d not in index]
    if missing:
        raise SchemaError(f"coordinate names missing: {missing}")
    return values[:, [index[d] for d in dofs]]


def _paired(est, truth, names, truth_names, dofs):
    a = _columns(est, names, dofs)
    b = _columns(truth, names if truth_names is None else truth_names, dofs)
    if len(a) != len(b):
        raise ShapeMismatchError(f"{len(a)} estimated frames but {len(b)} true frames")
    if len(a) == 0:
        raise ShapeMismatchError("no frames to compare")
    return a, b


def wrap_angle(x):
    return (np.asarray(x) + np.pi) % (2 * np.pi) - np.pi


def mae_rotational(est, truth, names, truth_names=None, dofs=EVAL_ROTATIONAL):
    """Per-DOF MAE in degrees and their mean. Inputs are radians."""
    a, b = _paired(est, truth, names, truth_names, dofs)
    per = np.rad2deg(np.mean(np.abs(wrap_angle(a - b)), axis=0))
    return dict(zip(dofs, per.tolist())), float(per.mean())


def mae_translational(est, truth, names, truth_names=None, dofs=EVAL_TRANSLATIONAL):
    """Per-axis MAE in cm and their mean. Inputs are metres."""
    a, b = _paired(est, truth, names, truth_names, dofs)
    per = 100.0 * np.mean(np.abs(a - b), axis=0)
    return dict(zip(dofs, per.tolist())), float(per.mean())


def drift_curve(est_positions, truth_positions, boundaries) -> list:
    """Pelvis position error (cm) at each boundary frame after frame-0 alignment."""
    est = np.asarray(est_positions, dtype=float)
    truth = np.asarray(truth_positions, dtype=float)
    if est.shape != truth.shape or est.ndim != 2 or est.shape[1] != 3:
        raise ShapeMismatchError("positions must both be (frames, 3)")
    n = len(est)
    out = []
    for b in boundaries:
        if not 0 <= int(b) < n:
            raise ParameterError(f"repetition boundary {b} outside [0, {n})")
        d = (est[b] - est[0]) - (truth[b] - truth[0])
        out.append(100.0 * float(np.linalg.norm(d)))
    return out


def stance_mask(stance: dict, n_frames: int, sides=("r", "l")) -> np.ndarray:
    """(F, 2) mask from inclusive per-side spans."""
    mask = np.zeros((n_frames, len(sides)), dtype=bool)
    for j, s in enumerate(sides):
        for a, b in stance.get(s, []):
            mask[a:b + 1, j] = True
    return mask


def mae_grf(est_forces, truth_forces, stance: dict, body_weight: float):
    """Stance-only per-axis MAE as % body weight; forces are (F, 2, 3), right then left."""
    est = np.asarray(est_forces, dtype=float)
    truth = np.asarray(truth_forces, dtype=float)
    if est.shape != truth.shape or est.ndim != 3 or est.shape[1:] != (2, 3):
        raise ShapeMismatchError("forces must both be (frames, 2, 3)")
    if not body_weight > 0:
        raise ParameterError("body weight must be positive")
    mask = stance_mask(stance, len(est))
    if not mask.any():
        msg = "no stance frames; GRF error is undefined"
        log.warning(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return None
    err = np.abs(est - truth)[mask]  # (n, 3)
    per = 100.0 * err.mean(axis=0) / body_weight
    return dict(zip(GRF_AXES, per.tolist()))


def bout_penetration(points, bouts, floor_height=0.0) -> list:
    """Deepest in-bout point below the floor per bout (m, >= 0).

    ``points`` is (F, C, 3) contact-point positions; bouts carry ``channel``,
    ``start`` and ``end`` (inclusive).
    """
    pts = np.asarray(points, dtype=float)
    return [float(max(0.0, np.max(floor_height - pts[b.start:b.end + 1, b.channel, 1])))
            for b in bouts]


def bout_displacement(points, bouts) -> list:
    """Largest horizontal distance between any two in-bout positions per bout (m)."""
    pts = np.asarray(points, dtype=float)
    out = []
    for b in bouts:
        xz = pts[b.start:b.end + 1, b.channel][:, [0, 2]]
        d = xz[:, None, :] - xz[None, :, :]
        out.append(float(np.sqrt((d ** 2).sum(-1)).max()))
    return out


def camera_alignment(est: CameraExtrinsics, truth: CameraExtrinsics):
    """(R, t) mapping estimated-world points into the true world through the camera.

    A point seen at the same place by both cameras lands at the same true-world
    location, which removes the gauge freedom shared by camera and body.
    """
    re, rt = est.matrix, truth.matrix
    rot = rt.T @ re
    trans = rt.T @ (np.asarray(est.translation) - np.asarray(truth.translation))
    return rot, trans


def apply_rigid(points, rot, trans):
    pts = np.asarray(points, dtype=float)
    return pts @ rot.T + trans


def score(q_est, names, q_truth, truth_names, repetitions, est_forces=None,
          truth_forces=None, stance=None, body_weight=None, est_contacts=None, bouts=(),
          floor_height=0.0, extras=None) -> EvalReport:
    """All metrics at once. Pelvis translations are the first three named columns."""
    rot, rot_mean = mae_rotational(q_est, q_truth, names, truth_names)
    trans, trans_mean = mae_translational(q_est, q_truth, names, truth_names)
    pos_e = _columns(q_est, names, EVAL_TRANSLATIONAL)
    pos_t = _columns(q_truth, truth_names, EVAL_TRANSLATIONAL)
    curve = drift_curve(pos_e, pos_t, repetitions)
    grf = None
    if est_forces is not None and truth_forces is not None:
        grf = mae_grf(est_forces, truth_forces, stance or {}, body_weight)
    extras = dict(extras or {})
    if est_contacts is not None:
        pen = bout_penetration(est_contacts, bouts, floor_height)
        slide = bout_displacement(est_contacts, bouts)
        extras["bout_penetration_m"] = pen
        extras["bout_displacement_m"] = slide
        extras["max_bout_penetration_m"] = max(pen, default=0.0)
        extras["max_bout_displacement_m"] = max(slide, default=0.0)
    return EvalReport(rot, rot_mean, trans, trans_mean, curve, grf, extras)
