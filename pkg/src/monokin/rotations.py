"""Axis-angle helpers in numpy and torch (float64)."""

import numpy as np
import torch
from scipy.spatial.transform import Rotation

_SMALL = 1e-12


def axis_angle_to_matrix(rotvec):
    """Rodrigues for ``(..., 3)`` arrays; returns ``(..., 3, 3)``."""
    rotvec = np.asarray(rotvec, dtype=float)
    shape = rotvec.shape[:-1]
    mats = Rotation.from_rotvec(rotvec.reshape(-1, 3)).as_matrix()
    return mats.reshape(*shape, 3, 3)


def matrix_to_axis_angle(mat):
    mat = np.asarray(mat, dtype=float)
    shape = mat.shape[:-2]
    vec = Rotation.from_matrix(mat.reshape(-1, 3, 3)).as_rotvec()
    return vec.reshape(*shape, 3)


def axis_rotation(axis, angle):
    """Rotation matrix for a unit ``axis`` and scalar ``angle``."""
    axis = np.asarray(axis, dtype=float)
    k = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def canonical_axis_angle(rotvec):
    """Wrap axis-angle vectors so their magnitude lies in [0, pi]."""
    return matrix_to_axis_angle(axis_angle_to_matrix(rotvec))


def rodrigues(rotvec: torch.Tensor) -> torch.Tensor:
    """Differentiable Rodrigues formula, safe at zero angle.

    Small angles switch to Taylor coefficients so the gradient stays finite
    and exact at the origin.
    """
    theta2 = (rotvec * rotvec).sum(-1, keepdim=True)
    small = theta2 < _SMALL
    safe2 = torch.where(small, torch.ones_like(theta2), theta2)
    theta = torch.sqrt(safe2)
    a = torch.where(small, 1.0 - theta2 / 6.0, torch.sin(theta) / theta)
    b = torch.where(small, 0.5 - theta2 / 24.0, (1.0 - torch.cos(theta)) / safe2)
    x, y, z = rotvec.unbind(-1)
    zero = torch.zeros_like(x)
    k = torch.stack([zero, -z, y, z, zero, -x, -y, x, zero], -1)
    k = k.reshape(*rotvec.shape[:-1], 3, 3)
    eye = torch.eye(3, dtype=rotvec.dtype).expand_as(k)
    return eye + a[..., None] * k + b[..., None] * (k @ k)
