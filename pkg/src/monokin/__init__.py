"""Refinement of monocular 3D pose sequences into constrained-skeleton kinematics."""

__version__ = "0.1.0"
