"""Parametric articulated body model.

Shape coefficients blend linearly into segment rest offsets; keypoints and
virtual markers are fixed local anchors on segments. All geometry lives in a
JSON template so another body model can be dropped in without code changes.

World frame: x forward, y up, z to the subject's right. Meters and radians.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch

from .errors import ShapeMismatchError, StructureError, ValidationError
from .rotations import rodrigues

SHAPE_DIM = 10
N_MARKERS = 38
TEMPLATE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class BodyShape:
    coeffs: np.ndarray
    reference_coeffs: np.ndarray | None = None

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.shape != (SHAPE_DIM,):
            raise ShapeMismatchError(f"shape needs {SHAPE_DIM} coefficients, got {c.size}")
        if not np.all(np.isfinite(c)):
            raise ValidationError("shape coefficients must be finite")
        object.__setattr__(self, "coeffs", c)
        if self.reference_coeffs is not None:
            ref = np.array(self.reference_coeffs, dtype=float).reshape(-1)
            if ref.shape != (SHAPE_DIM,):
                raise ShapeMismatchError("reference shape has the wrong length")
            object.__setattr__(self, "reference_coeffs", ref)

    @classmethod
    def zeros(cls):
        return cls(np.zeros(SHAPE_DIM))


@dataclass(frozen=True)
class PoseFrame:
    joint_rotations: np.ndarray  # (J-1, 3) axis-angle, parent-relative
    root_translation: np.ndarray  # (3,)
    root_orientation: np.ndarray  # (3,)

    def __post_init__(self):
        jr = np.array(self.joint_rotations, dtype=float)
        if jr.ndim != 2 or jr.shape[1] != 3:
            raise ShapeMismatchError("joint_rotations must be (n_joints, 3)")
        tr = np.array(self.root_translation, dtype=float).reshape(3)
        ro = np.array(self.root_orientation, dtype=float).reshape(3)
        for arr in (jr, tr, ro):
            if not np.all(np.isfinite(arr)):
                raise ValidationError("pose values must be finite")
        object.__setattr__(self, "joint_rotations", jr)
        object.__setattr__(self, "root_translation", tr)
        object.__setattr__(self, "root_orientation", ro)


@dataclass(frozen=True)
class PoseSequence:
    """Pose frames stored as stacked arrays: (F, J-1, 3), (F, 3), (F, 3)."""

    joint_rotations: np.ndarray
    root_translation: np.ndarray
    root_orientation: np.ndarray
    frame_rate: float

    def __post_init__(self):
        jr = np.array(self.joint_rotations, dtype=float)
        tr = np.array(self.root_translation, dtype=float)
        ro = np.array(self.root_orientation, dtype=float)
        if jr.ndim != 3 or jr.shape[2] != 3:
            raise ShapeMismatchError("joint_rotations must be (frames, joints, 3)")
        n = jr.shape[0]
        if tr.shape != (n, 3) or ro.shape != (n, 3):
            raise ShapeMismatchError("root arrays must be (frames, 3)")
        if n < 2:
            raise ValidationError("a pose sequence needs at least 2 frames")
        if not self.frame_rate > 0:
            raise ValidationError("frame_rate must be positive")
        if not (np.all(np.isfinite(jr)) and np.all(np.isfinite(tr)) and np.all(np.isfinite(ro))):
            raise ValidationError("pose values must be finite")
        object.__setattr__(self, "joint_rotations", jr)
        object.__setattr__(self, "root_translation", tr)
        object.__setattr__(self, "root_orientation", ro)
        object.__setattr__(self, "frame_rate", float(self.frame_rate))

    def __len__(self):
        return self.joint_rotations.shape[0]

    def frame(self, i: int) -> PoseFrame:
        return PoseFrame(self.joint_rotations[i], self.root_translation[i],
                         self.root_orientation[i])

    @property
    def frames(self) -> list[PoseFrame]:
        return [self.frame(i) for i in range(len(self))]

    @classmethod
    def from_frames(cls, frames, frame_rate):
        return cls(np.stack([f.joint_rotations for f in frames]),
                   np.stack([f.root_translation for f in frames]),
                   np.stack([f.root_orientation for f in frames]), frame_rate)

    @property
    def times(self):
        return np.arange(len(self)) / self.frame_rate


class SegmentFrames(NamedTuple):
    rotations: np.ndarray  # (S, 3, 3) world
    origins: np.ndarray  # (S, 3) world


@dataclass(frozen=True, eq=False)
class SkeletonTemplate:
    segment_names: tuple[str, ...]
    parents: tuple[int, ...]  # -1 for the root
    offsets: np.ndarray  # (S, 3)
    shape_basis: np.ndarray  # (S, D, 3)
    anchor_shape_scale: np.ndarray  # (D,)
    keypoint_names: tuple[str, ...]
    keypoint_segments: np.ndarray
    keypoint_offsets: np.ndarray
    marker_names: tuple[str, ...]
    marker_segments: np.ndarray
    marker_offsets: np.ndarray
    stature_top: int
    stature_base: tuple[int, ...]
    contact_keypoints: dict = field(default_factory=dict)  # channel -> keypoint index
    standing_pose: PoseFrame | None = None
    format_version: int = TEMPLATE_FORMAT_VERSION

    def __post_init__(self):
        n = len(self.segment_names)
        if len(self.parents) != n or self.offsets.shape != (n, 3):
            raise StructureError("segment arrays disagree in length")
        if self.shape_basis.shape != (n, SHAPE_DIM, 3):
            raise StructureError("shape basis must be (segments, 10, 3)")
        if self.parents[0] != -1:
            raise StructureError("segment 0 must be the root (no parent)")
        for i, p in enumerate(self.parents[1:], start=1):
            if not 0 <= p < n or p == i:
                raise StructureError(f"segment {self.segment_names[i]!r} has bad parent {p}")
        self.order  # raises on cycles
        if len(self.marker_names) != N_MARKERS:
            raise StructureError(f"template needs {N_MARKERS} marker anchors, "
                                 f"got {len(self.marker_names)}")
        for segs in (self.keypoint_segments, self.marker_segments):
            if np.any(segs < 0) or np.any(segs >= n):
                raise StructureError("anchor refers to a missing segment")
        if self.standing_pose is not None and \
                self.standing_pose.joint_rotations.shape[0] != n - 1:
            raise StructureError("standing pose has the wrong joint count")

    @cached_property
    def order(self) -> tuple[int, ...]:
        """Topological order of segments, root first."""
        children = {i: [] for i in range(self.n_segments)}
        for i, p in enumerate(self.parents):
            if p >= 0:
                children[p].append(i)
        out, stack = [], [0]
        while stack:
            i = stack.pop()
            out.append(i)
            stack.extend(reversed(children[i]))
        if len(out) != self.n_segments:
            raise StructureError("segment tree has a cycle or unreachable segments")
        return tuple(out)

    @property
    def n_segments(self):
        return len(self.segment_names)

    @property
    def n_joints(self):
        return self.n_segments - 1

    @property
    def n_keypoints(self):
        return len(self.keypoint_names)

    def keypoint_index(self, name):
        return self.keypoint_names.index(name)

    @cached_property
    def contact_indices(self) -> np.ndarray:
        return np.array([self.contact_keypoints[c] for c in CONTACT_CHANNELS])

    @cached_property
    def torch_data(self):
        t = lambda a: torch.as_tensor(np.asarray(a, dtype=float))
        return {
            "offsets": t(self.offsets),
            "basis": t(self.shape_basis),
            "anchor_scale": t(self.anchor_shape_scale),
            "kp_offsets": t(self.keypoint_offsets),
            "mk_offsets": t(self.marker_offsets),
        }

    def default_pose(self) -> PoseFrame:
        if self.standing_pose is not None:
            return self.standing_pose
        return PoseFrame(np.zeros((self.n_joints, 3)), np.zeros(3), np.zeros(3))

    @classmethod
    def from_dict(cls, doc: dict) -> "SkeletonTemplate":
        if doc.get("format_version") != TEMPLATE_FORMAT_VERSION:
            raise StructureError(f"unsupported template format_version {doc.get('format_version')}")
        segs = doc["segments"]
        names = tuple(s["name"] for s in segs)
        parents = tuple(-1 if s["parent"] is None else int(s["parent"]) for s in segs)
        kps = doc["keypoint_anchors"]
        mks = doc["marker_anchors"]
        kp_names = tuple(k["name"] for k in kps)
        stature = doc["stature"]
        sp = doc.get("standing_pose")
        standing = None
        if sp is not None:
            standing = PoseFrame(sp["joint_rotations"], sp["root_translation"],
                                 sp["root_orientation"])
        try:
            contacts = {ch: kp_names.index(k) for ch, k in doc["contact_keypoints"].items()}
            top = kp_names.index(stature["top"])
            base = tuple(kp_names.index(b) for b in stature["base"])
        except ValueError as exc:
            raise StructureError(f"template references unknown keypoint: {exc}") from None
        return cls(
            segment_names=names,
            parents=parents,
            offsets=np.array([s["offset"] for s in segs], dtype=float),
            shape_basis=np.array([s["shape_basis"] for s in segs], dtype=float),
            anchor_shape_scale=np.array(doc.get("anchor_shape_scale", [0.0] * SHAPE_DIM), dtype=float),
            keypoint_names=kp_names,
            keypoint_segments=np.array([k["segment"] for k in kps], dtype=int),
            keypoint_offsets=np.array([k["offset"] for k in kps], dtype=float),
            marker_names=tuple(m["name"] for m in mks),
            marker_segments=np.array([m["segment"] for m in mks], dtype=int),
            marker_offsets=np.array([m["offset"] for m in mks], dtype=float),
            stature_top=top,
            stature_base=base,
            contact_keypoints=contacts,
            standing_pose=standing,
            format_version=doc["format_version"],
        )

    @classmethod
    def load(cls, path=None) -> "SkeletonTemplate":
        if path is None:
            text = resources.files("monokin.data").joinpath("skeleton_template.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_dict(json.loads(text))


CONTACT_CHANNELS = ("l_heel", "r_heel", "l_toe", "r_toe")


def default_template() -> SkeletonTemplate:
    return SkeletonTemplate.load()


# -- torch core ---------------------------------------------------------------

def fk_torch(template: SkeletonTemplate, beta, joint_rotations, root_translation,
             root_orientation):
    """Batched forward kinematics.

    ``beta`` is (D,); pose arrays carry a leading frame axis. Returns world
    rotations (F, S, 3, 3) and origins (F, S, 3).
    """
    td = template.torch_data
    offsets = td["offsets"] + torch.einsum("d,sdk->sk", beta, td["basis"])
    local = rodrigues(joint_rotations)  # (F, J-1, 3, 3)
    n = template.n_segments
    rots = [None] * n
    origins = [None] * n
    rots[0] = rodrigues(root_orientation)
    origins[0] = root_translation + offsets[0]
    for i in template.order[1:]:
        p = template.parents[i]
        rp = rots[p]
        origins[i] = origins[p] + (rp @ offsets[i].unsqueeze(-1)).squeeze(-1)
        rots[i] = rp @ local[:, i - 1]
    return torch.stack(rots, 1), torch.stack(origins, 1)


def anchors_torch(rots, origins, segments, local_offsets, scale):
    """World positions of anchors; ``scale`` multiplies the local offsets."""
    loc = local_offsets * scale
    r = rots[:, segments]
    return origins[:, segments] + (r @ loc.unsqueeze(-1)).squeeze(-1)


def anchor_scale_torch(template, beta):
    return 1.0 + (template.torch_data["anchor_scale"] * beta).sum()


def keypoints_torch(template, beta, rots, origins):
    return anchors_torch(rots, origins, template.keypoint_segments,
                         template.torch_data["kp_offsets"], anchor_scale_torch(template, beta))


def markers_torch(template, beta, rots, origins):
    return anchors_torch(rots, origins, template.marker_segments,
                         template.torch_data["mk_offsets"], anchor_scale_torch(template, beta))


def height_torch(template, beta):
    pose = template.default_pose()
    t = lambda a: torch.as_tensor(a, dtype=torch.float64)[None]
    rots, origins = fk_torch(template, beta, t(pose.joint_rotations),
                             t(pose.root_translation), t(pose.root_orientation))
    kp = keypoints_torch(template, beta, rots, origins)[0]
    base = kp[list(template.stature_base), 1].mean()
    return kp[template.stature_top, 1] - base


# -- numpy-facing API -----------------------------------------------------------

def _check_shape(shape, template):
    if not isinstance(shape, BodyShape):
        shape = BodyShape(shape)
    return torch.as_tensor(shape.coeffs)


def _pose_tensors(frame: PoseFrame, template):
    if frame.joint_rotations.shape[0] != template.n_joints:
        raise ShapeMismatchError(f"pose has {frame.joint_rotations.shape[0]} joints, "
                                 f"template has {template.n_joints}")
    t = lambda a: torch.as_tensor(a)[None]
    return t(frame.joint_rotations), t(frame.root_translation), t(frame.root_orientation)


def _seq_tensors(seq: PoseSequence, template):
    if seq.joint_rotations.shape[1] != template.n_joints:
        raise ShapeMismatchError("pose sequence joint count does not match template")
    t = torch.as_tensor
    return t(seq.joint_rotations), t(seq.root_translation), t(seq.root_orientation)


def forward_kinematics(shape, frame: PoseFrame, template: SkeletonTemplate) -> SegmentFrames:
    beta = _check_shape(shape, template)
    with torch.no_grad():
        rots, origins = fk_torch(template, beta, *_pose_tensors(frame, template))
    return SegmentFrames(rots[0].numpy(), origins[0].numpy())


def model_height(shape, template: SkeletonTemplate) -> float:
    """Standing stature: head-top anchor above the mean heel anchor height."""
    beta = _check_shape(shape, template)
    with torch.no_grad():
        return float(height_torch(template, beta))


def extract_keypoints(shape, frame: PoseFrame, template: SkeletonTemplate) -> np.ndarray:
    beta = _check_shape(shape, template)
    with torch.no_grad():
        rots, origins = fk_torch(template, beta, *_pose_tensors(frame, template))
        return keypoints_torch(template, beta, rots, origins)[0].numpy()


def extract_markers(shape, frame: PoseFrame, template: SkeletonTemplate) -> np.ndarray:
    beta = _check_shape(shape, template)
    with torch.no_grad():
        rots, origins = fk_torch(template, beta, *_pose_tensors(frame, template))
        return markers_torch(template, beta, rots, origins)[0].numpy()


def static_markers(shape, template: SkeletonTemplate) -> np.ndarray:
    return extract_markers(shape, template.default_pose(), template)


def sequence_positions(shape, seq: PoseSequence, template: SkeletonTemplate):
    """Return (segment origins, keypoints, markers) for every frame."""
    beta = _check_shape(shape, template)
    with torch.no_grad():
        rots, origins = fk_torch(template, beta, *_seq_tensors(seq, template))
        kp = keypoints_torch(template, beta, rots, origins)
        mk = markers_torch(template, beta, rots, origins)
    return origins.numpy(), kp.numpy(), mk.numpy()


def shape_for_height(height: float, template: SkeletonTemplate, base=None) -> BodyShape:
    """Adjust the stature coefficient of ``base`` so the model is ``height`` tall.

    Height is affine in the coefficients, so one secant step is exact.
    """
    beta = np.zeros(SHAPE_DIM) if base is None else np.array(base, dtype=float)
    h0 = model_height(beta, template)
    probe = beta.copy()
    probe[0] += 1.0
    slope = model_height(probe, template) - h0
    beta[0] += (height - h0) / slope
    return BodyShape(beta)
