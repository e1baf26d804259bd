"""Loss terms of the two refinement stages.

Every term is a pure torch function returning a 0-d float64 tensor, so the
stage objectives are differentiable end to end with autograd. Inputs may be
numpy arrays; they are converted on entry.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np
import torch

from . import model as body
from .camera import CameraExtrinsics, CameraIntrinsics, project_torch
from .errors import ShapeMismatchError, ValidationError
from .model import CONTACT_CHANNELS, BodyShape, PoseSequence, SkeletonTemplate

log = logging.getLogger(__name__)

BEHIND_CAMERA_PENALTY = 1e6  # px^2
VERTICAL = 1
DEFAULT_BOUT_THRESHOLD = 0.5
DEFAULT_MIN_BOUT_FRAMES = 3


def _t(x):
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ObservationSet:
    keypoints: np.ndarray  # (F, N, 2) px
    confidences: np.ndarray  # (F, N)
    contacts: np.ndarray  # (F, 4), channel order CONTACT_CHANNELS
    frame_rate: float
    subject_height: float

    def __post_init__(self):
        kp = np.asarray(self.keypoints, dtype=float)
        conf = np.asarray(self.confidences, dtype=float)
        con = np.asarray(self.contacts, dtype=float)
        if kp.ndim != 3 or kp.shape[2] != 2:
            raise ShapeMismatchError("keypoints must be (frames, N, 2)")
        n_frames = kp.shape[0]
        if conf.shape != kp.shape[:2]:
            raise ShapeMismatchError("confidences must be (frames, N)")
        if con.shape != (n_frames, len(CONTACT_CHANNELS)):
            raise ShapeMismatchError("contacts must be (frames, 4)")
        for name, arr in (("confidences", conf), ("contact probabilities", con)):
            if np.any(~np.isfinite(arr)) or arr.min() < 0 or arr.max() > 1:
                raise ValidationError(f"{name} must lie in [0, 1]")
        if not np.all(np.isfinite(kp)):
            raise ValidationError("keypoints must be finite")
        if not 0.5 < self.subject_height < 2.5:
            raise ValidationError("subject height must be in (0.5, 2.5) m")
        if not self.frame_rate > 0:
            raise ValidationError("frame_rate must be positive")
        object.__setattr__(self, "keypoints", kp)
        object.__setattr__(self, "confidences", conf)
        object.__setattr__(self, "contacts", con)

    @property
    def n_frames(self):
        return self.keypoints.shape[0]

    @property
    def n_keypoints(self):
        return self.keypoints.shape[1]


@dataclass(frozen=True)
class ContactBout:
    channel: int
    start: int
    end: int  # inclusive

    def __post_init__(self):
        if self.start > self.end:
            raise ValidationError("bout start after end")

    @property
    def length(self):
        return self.end - self.start + 1


@dataclass(frozen=True)
class RefinementPreset:
    name: str
    filter_cutoff_hz: float
    w_r: float
    w_v: float
    w_s: float
    w_sm: float
    w_f: float | None
    w_c: float = 1.0e6
    w_h: float = 1.0e8
    w_beta: float = 1.0e4

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name.startswith("w_") and v is not None and v < 0:
                raise ValidationError(f"preset weight {f.name} must be >= 0")
        if not self.filter_cutoff_hz > 0:
            raise ValidationError("filter cutoff must be positive")


ACTIVITY_PRESETS = {"walking": "walking", "squats": "squats", "sts": "sts"}


def load_presets(path=None, overrides: dict | None = None) -> dict[str, RefinementPreset]:
    """Read the preset file; ``overrides`` uses the same layout and wins."""
    if path is None:
        text = resources.files("monokin.data").joinpath("presets.json").read_text()
    else:
        text = Path(path).read_text()
    doc = json.loads(text)
    defaults = dict(doc.get("defaults", {}))
    raw = {k: dict(v) for k, v in doc["presets"].items()}
    if overrides:
        defaults.update(overrides.get("defaults", {}))
        for k, v in overrides.get("presets", {}).items():
            raw.setdefault(k, {}).update(v)
    out = {}
    for name, vals in raw.items():
        merged = {**defaults, **vals}
        out[name] = RefinementPreset(name=name, **merged)
    return out


def preset_for_activity(presets, activity):
    return presets[ACTIVITY_PRESETS.get(activity, "other")]


# -- individual terms ---------------------------------------------------------------

def l_repr(projected, observed, confidences, behind=None):
    """Confidence-weighted squared reprojection error per frame and keypoint."""
    projected, observed, w = _t(projected), _t(observed), _t(confidences)
    if projected.shape != observed.shape or w.shape != observed.shape[:-1]:
        raise ShapeMismatchError(f"projected {tuple(projected.shape)} vs observed "
                                 f"{tuple(observed.shape)}")
    sq = ((projected - observed) ** 2).sum(-1)
    if behind is not None:
        sq = torch.where(_t(behind).bool(), torch.full_like(sq, BEHIND_CAMERA_PENALTY), sq)
    count = w.numel()
    return (w * sq).sum() / count


def l_height(beta, target_height, template: SkeletonTemplate):
    h = body.height_torch(template, _t(beta))
    return (target_height - h) ** 2


def l_beta(beta, reference):
    beta, reference = _t(beta), _t(reference)
    if beta.shape != reference.shape:
        raise ShapeMismatchError("shape vectors differ in length")
    return ((beta - reference) ** 2).sum()


def l_cam(rotation, translation, rotation_ref, translation_ref):
    return ((_t(rotation) - _t(rotation_ref)) ** 2).sum() + \
        ((_t(translation) - _t(translation_ref)) ** 2).sum()


def velocity(points, frame_rate):
    """Central differences along axis 0, one-sided at the ends."""
    x = _t(points)
    if x.shape[0] < 2:
        raise ValidationError("velocity needs at least 2 frames")
    first = x[1:2] - x[0:1]
    last = x[-1:] - x[-2:-1]
    mid = (x[2:] - x[:-2]) / 2.0
    return torch.cat([first, mid, last], 0) * frame_rate


def l_foot_vel(foot_points, contacts, frame_rate):
    """Contact-probability weighted squared foot speed, averaged per frame."""
    v = velocity(foot_points, frame_rate)
    p = _t(contacts)
    return (p * (v ** 2).sum(-1)).sum() / v.shape[0]


def segment_bouts(contacts, threshold=DEFAULT_BOUT_THRESHOLD,
                  min_frames=DEFAULT_MIN_BOUT_FRAMES) -> list[ContactBout]:
    """Maximal runs with probability >= threshold, per channel."""
    p = np.asarray(contacts, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    bouts = []
    for ch in range(p.shape[1]):
        on = np.concatenate([[False], p[:, ch] >= threshold, [False]])
        edges = np.flatnonzero(np.diff(on.astype(int)))
        for start, stop in zip(edges[::2], edges[1::2]):
            if stop - start >= min_frames:
                bouts.append(ContactBout(ch, int(start), int(stop - 1)))
    return bouts


def l_foot_slide(foot_points, bouts):
    """Mean over bouts of the summed per-axis positional variance."""
    if not bouts:
        return torch.zeros((), dtype=torch.float64)
    x = _t(foot_points)
    total = 0.0
    for b in bouts:
        seg = x[b.start:b.end + 1, b.channel]
        # shifting by the first sample keeps constant runs at exactly zero
        total = total + (seg - seg[0].detach()).var(0, unbiased=False).sum()
    return total / len(bouts)


def l_flat(foot_points, bouts):
    """Variance of the vertical coordinate pooled over all in-bout frames."""
    x = _t(foot_points)
    heights = [x[b.start:b.end + 1, b.channel, VERTICAL] for b in bouts]
    if not heights or sum(h.shape[0] for h in heights) < 2:
        return torch.zeros((), dtype=torch.float64)
    h = torch.cat(heights)
    return (h - h[0].detach()).var(unbiased=False)


def l_smooth(joint_points, frame_rate):
    v = velocity(joint_points, frame_rate)
    return (v ** 2).sum(-1).mean()


# -- stage problems --------------------------------------------------------------------

class Stage1Problem:
    """Shape and camera extrinsics with the pose sequence held fixed.

    Design vector: ``[beta (10), camera rotation (3), camera translation (3)]``.
    """

    name = "stage1"

    def __init__(self, template, poses: PoseSequence, obs: ObservationSet,
                 intr: CameraIntrinsics, preset: RefinementPreset, reference_beta):
        self.template = template
        self.obs = obs
        self.intr = intr
        self.preset = preset
        self.reference = torch.as_tensor(np.asarray(reference_beta, dtype=float))
        self._pose = [torch.as_tensor(a) for a in
                      (poses.joint_rotations, poses.root_translation, poses.root_orientation)]
        self._kp_obs = torch.as_tensor(obs.keypoints)
        self._conf = torch.as_tensor(obs.confidences)

    def pack(self, shape: BodyShape, extr: CameraExtrinsics):
        return np.concatenate([shape.coeffs, extr.rotation, extr.translation])

    def unpack(self, x):
        x = np.asarray(x, dtype=float)
        return BodyShape(x[:10]), CameraExtrinsics(x[10:13], x[13:16])

    def terms(self, x: torch.Tensor) -> dict:
        beta, rot, trans = x[:10], x[10:13], x[13:16]
        rots, origins = body.fk_torch(self.template, beta, *self._pose)
        kp = body.keypoints_torch(self.template, beta, rots, origins)
        uv, behind = project_torch(kp, self.intr, rot, trans)
        return {
            "repr": l_repr(uv, self._kp_obs, self._conf, behind),
            "height": l_height(beta, self.obs.subject_height, self.template),
            "beta": l_beta(beta, self.reference),
        }

    def combine(self, terms):
        p = self.preset
        return p.w_r * terms["repr"] + p.w_h * terms["height"] + p.w_beta * terms["beta"]

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        return self.combine(self.terms(x))


class Stage2Problem:
    """Whole-sequence pose and camera extrinsics with the shape held fixed.

    Design vector: joint rotations (F*(J-1)*3), root orientations (F*3),
    root translations (F*3), then camera rotation and translation (6).
    """

    name = "stage2"

    def __init__(self, template, shape: BodyShape, obs: ObservationSet,
                 intr: CameraIntrinsics, preset: RefinementPreset,
                 stage1_extr: CameraExtrinsics, bouts: list[ContactBout]):
        self.template = template
        self.shape = shape
        self.obs = obs
        self.intr = intr
        self.preset = preset
        self.stage1_extr = stage1_extr
        self.bouts = list(bouts)
        self.n_frames = obs.n_frames
        self._beta = torch.as_tensor(shape.coeffs)
        self._kp_obs = torch.as_tensor(obs.keypoints)
        self._conf = torch.as_tensor(obs.confidences)
        self._contacts = torch.as_tensor(obs.contacts)
        self._cam_ref = (torch.as_tensor(stage1_extr.rotation),
                         torch.as_tensor(stage1_extr.translation))

    @property
    def size(self):
        return self.n_frames * (self.template.n_joints + 2) * 3 + 6

    def pack(self, poses: PoseSequence, extr: CameraExtrinsics):
        return np.concatenate([poses.joint_rotations.ravel(), poses.root_orientation.ravel(),
                               poses.root_translation.ravel(), extr.rotation,
                               extr.translation])

    def _split(self, x):
        f, j = self.n_frames, self.template.n_joints
        a = f * j * 3
        b = a + f * 3
        c = b + f * 3
        return (x[:a].reshape(f, j, 3), x[a:b].reshape(f, 3), x[b:c].reshape(f, 3),
                x[c:c + 3], x[c + 3:c + 6])

    def unpack(self, x):
        jr, ro, tr, rot, trans = self._split(np.asarray(x, dtype=float))
        return (PoseSequence(jr, tr, ro, self.obs.frame_rate),
                CameraExtrinsics(rot, trans))

    def terms(self, x: torch.Tensor) -> dict:
        jr, ro, tr, rot, trans = self._split(x)
        rots, origins = body.fk_torch(self.template, self._beta, jr, tr, ro)
        kp = body.keypoints_torch(self.template, self._beta, rots, origins)
        uv, behind = project_torch(kp, self.intr, rot, trans)
        feet = kp[:, self.template.contact_indices]
        fr = self.obs.frame_rate
        out = {
            "repr": l_repr(uv, self._kp_obs, self._conf, behind),
            "cam": l_cam(rot, trans, *self._cam_ref),
            "foot_vel": l_foot_vel(feet, self._contacts, fr),
            "foot_slide": l_foot_slide(feet, self.bouts),
            "smooth": l_smooth(origins, fr),
        }
        if self.preset.w_f is not None:
            out["flat"] = l_flat(feet, self.bouts)
        return out

    def combine(self, terms):
        p = self.preset
        total = (p.w_r * terms["repr"] + p.w_c * terms["cam"] + p.w_v * terms["foot_vel"]
                 + p.w_s * terms["foot_slide"] + p.w_sm * terms["smooth"])
        if p.w_f is not None:
            total = total + p.w_f * terms["flat"]
        return total

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        return self.combine(self.terms(x))


def evaluate(problem, x) -> float:
    with torch.no_grad():
        return float(problem(torch.as_tensor(np.asarray(x, dtype=float))))


def evaluate_terms(problem, x) -> dict[str, float]:
    with torch.no_grad():
        return {k: float(v) for k, v in problem.terms(torch.as_tensor(np.asarray(x, dtype=float))).items()}


def stage1_objective(shape: BodyShape, extr: CameraExtrinsics, poses: PoseSequence,
                     obs: ObservationSet, intr: CameraIntrinsics, preset: RefinementPreset,
                     template: SkeletonTemplate, reference_beta=None) -> float:
    ref = shape.reference_coeffs if reference_beta is None else reference_beta
    if ref is None:
        raise ValidationError("stage 1 needs a reference shape")
    prob = Stage1Problem(template, poses, obs, intr, preset, ref)
    return evaluate(prob, prob.pack(shape, extr))


def stage2_objective(poses: PoseSequence, extr: CameraExtrinsics, shape: BodyShape,
                     obs: ObservationSet, intr: CameraIntrinsics, preset: RefinementPreset,
                     template: SkeletonTemplate, stage1_extr: CameraExtrinsics,
                     bouts) -> float:
    prob = Stage2Problem(template, shape, obs, intr, preset, stage1_extr, bouts)
    return evaluate(prob, prob.pack(poses, extr))


def with_weights(preset: RefinementPreset, **weights) -> RefinementPreset:
    return replace(preset, **weights)
