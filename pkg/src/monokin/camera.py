"""Ideal pinhole camera and the device intrinsics database.

Camera frame follows the usual vision convention (x right, y down, z along
the optical axis). ``X_cam = R(rotation) @ X_world + translation``.
"""

from __future__ import annotations

import difflib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import torch

from .errors import NotFoundError, ProjectionError, ValidationError
from .rotations import axis_angle_to_matrix, matrix_to_axis_angle, rodrigues

MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    image_width: int
    image_height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError("focal lengths must be positive")
        if not (0 <= self.cx < self.image_width and 0 <= self.cy < self.image_height):
            raise ValidationError("principal point must lie inside the image")

    @property
    def matrix(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_dict(self):
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.image_width, "height": self.image_height}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]))


@dataclass(frozen=True)
class CameraExtrinsics:
    rotation: np.ndarray  # axis-angle, world -> camera
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValidationError("extrinsics must be finite")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @property
    def matrix(self):
        return axis_angle_to_matrix(self.rotation)

    @property
    def center(self):
        """Camera position in world coordinates."""
        return -self.matrix.T @ self.translation

    @property
    def vector(self):
        return np.concatenate([self.rotation, self.translation])

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3:6])

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 1.0, 0.0)):
        """Camera at ``eye`` looking at ``target`` with image-up along ``up``."""
        eye = np.asarray(eye, dtype=float)
        z = np.asarray(target, dtype=float) - eye
        z /= np.linalg.norm(z)
        x = np.cross(z, np.asarray(up, dtype=float))
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        rot = np.stack([x, y, z])
        return cls(matrix_to_axis_angle(rot), -rot @ eye)

    def to_dict(self):
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["rotation"], d["translation"])


def project(point, intr: CameraIntrinsics, extr: CameraExtrinsics) -> np.ndarray:
    """Pixel coordinates of a world point. Raises if it is behind the camera."""
    p = extr.matrix @ np.asarray(point, dtype=float) + extr.translation
    if p[2] <= MIN_DEPTH:
        raise ProjectionError(f"point at depth {p[2]:.3g} m is behind the camera")
    return np.array([intr.fx * p[0] / p[2] + intr.cx, intr.fy * p[1] / p[2] + intr.cy])


def project_torch(points, intr: CameraIntrinsics, rotvec, translation):
    """Project (..., 3) world points. Returns pixels and a behind-camera mask."""
    rot = rodrigues(rotvec)
    pc = points @ rot.T + translation
    z = pc[..., 2]
    behind = z <= MIN_DEPTH
    zs = torch.where(behind, torch.ones_like(z), z)
    u = intr.fx * pc[..., 0] / zs + intr.cx
    v = intr.fy * pc[..., 1] / zs + intr.cy
    return torch.stack([u, v], -1), behind


class IntrinsicsDatabase:
    """Exact-match lookup of intrinsics by (device, (width, height))."""

    def __init__(self, records):
        self.entries = {}
        for rec in records:
            key = (str(rec["device"]), (int(rec["width"]), int(rec["height"])))
            if key in self.entries:
                raise ValidationError(f"duplicate intrinsics entry for {key}")
            self.entries[key] = CameraIntrinsics.from_dict(rec)

    def __len__(self):
        return len(self.entries)

    @classmethod
    def load(cls, path=None):
        if path is None:
            text = resources.files("monokin.data").joinpath("intrinsics.json").read_text()
        else:
            text = Path(path).read_text()
        return cls(json.loads(text))


def lookup_intrinsics(db: IntrinsicsDatabase, device: str, resolution) -> CameraIntrinsics:
    key = (device, (int(resolution[0]), int(resolution[1])))
    try:
        return db.entries[key]
    except KeyError:
        devices = sorted({d for d, _ in db.entries})
        near = difflib.get_close_matches(device, devices, n=3, cutoff=0.0)
        raise NotFoundError(f"no intrinsics for {device} at {resolution[0]}x{resolution[1]}; "
                            f"nearest devices: {', '.join(near)}") from None
