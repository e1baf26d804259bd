"""Two-stage whole-sequence pose refinement.

Stage 1 fits body shape and camera extrinsics with the initial poses fixed.
Stage 2 fits every frame's pose plus the extrinsics with the shape fixed,
as one joint problem so that temporal terms couple the frames.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.signal import butter, sosfiltfilt

from . import model as body
from .camera import CameraExtrinsics, CameraIntrinsics
from .errors import NumericalError, ParameterError, ShapeMismatchError, ValidationError
from .model import BodyShape, PoseSequence, SkeletonTemplate
from .objective import (ContactBout, ObservationSet, RefinementPreset, Stage1Problem,
                        Stage2Problem, evaluate_terms, segment_bouts)
from .optim import OptimizerConfig, OptimResult, minimize

log = logging.getLogger(__name__)

FLOOR_PERCENTILE = 5.0


@dataclass(frozen=True)
class RefinementInput:
    poses: PoseSequence  # theta0, tau0, Gamma0
    shape: BodyShape  # beta0
    extrinsics: CameraExtrinsics  # xi0
    observations: ObservationSet
    intrinsics: CameraIntrinsics
    preset: RefinementPreset

    def __post_init__(self):
        if len(self.poses) != self.observations.n_frames:
            raise ShapeMismatchError(f"{len(self.poses)} pose frames but "
                                     f"{self.observations.n_frames} observation frames")


@dataclass
class RefinementResult:
    poses: PoseSequence
    shape: BodyShape
    extrinsics: CameraExtrinsics
    stage1_trace: list = field(default_factory=list)
    stage2_trace: list = field(default_factory=list)
    status: dict = field(default_factory=dict)
    bouts: list = field(default_factory=list)
    terms: dict = field(default_factory=dict)
    markers: np.ndarray | None = None  # (F, 38, 3), low-pass filtered
    static_markers: np.ndarray | None = None
    floor_height: float | None = None


def value_and_grad(problem, x):
    xt = torch.tensor(np.asarray(x, dtype=float), requires_grad=True)
    f = problem(xt)
    (g,) = torch.autograd.grad(f, xt)
    return float(f.detach()), g.numpy()


def gradient(problem, x) -> np.ndarray:
    """Exact gradient of a stage objective by reverse-mode autodiff."""
    f, g = value_and_grad(problem, x)
    bad = np.flatnonzero(~np.isfinite(g))
    if bad.size:
        raise NumericalError(f"non-finite gradient component at index {int(bad[0])}")
    return g


def lowpass(trajectory, cutoff_hz, frame_rate):
    """Zero-phase low-pass: 2nd-order Butterworth run forward and backward."""
    nyq = 0.5 * frame_rate
    if not 0 < cutoff_hz < nyq:
        raise ParameterError(f"cutoff {cutoff_hz} Hz must lie in (0, {nyq}) Hz")
    x = np.asarray(trajectory, dtype=float)
    sos = butter(2, cutoff_hz / nyq, output="sos")
    padlen = min(3 * (2 * len(sos) + 1), x.shape[0] - 1)
    return sosfiltfilt(sos, x, axis=0, padlen=padlen)


def _warn_if_blind(obs: ObservationSet):
    if not np.any(obs.confidences > 0):
        msg = "all keypoint confidences are zero; refinement uses priors and physical terms only"
        log.warning(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)


def run_stage1(inp: RefinementInput, cfg: OptimizerConfig = OptimizerConfig(),
               template: SkeletonTemplate | None = None):
    """Returns ``(shape, extrinsics, OptimResult)``."""
    template = template or body.default_template()
    _warn_if_blind(inp.observations)
    prob = Stage1Problem(template, inp.poses, inp.observations, inp.intrinsics, inp.preset,
                         inp.shape.coeffs)
    x0 = prob.pack(inp.shape, inp.extrinsics)
    f0, _ = value_and_grad(prob, x0)
    if not np.isfinite(f0):
        raise ValidationError("stage 1 objective is not finite at the initial design")
    res = minimize(lambda x: value_and_grad(prob, x), x0, cfg)
    shape, extr = prob.unpack(res.x)
    shape = BodyShape(shape.coeffs, reference_coeffs=inp.shape.coeffs)
    log.info("stage 1: %s after %d iterations, J %.6g -> %.6g", res.status, res.n_iter,
             res.trace[0], res.fun)
    return shape, extr, res


def contact_bouts(obs: ObservationSet) -> list[ContactBout]:
    return segment_bouts(obs.contacts)


def run_stage2(inp: RefinementInput, shape: BodyShape, stage1_extr: CameraExtrinsics,
               cfg: OptimizerConfig = OptimizerConfig(),
               template: SkeletonTemplate | None = None, bouts=None) -> RefinementResult:
    template = template or body.default_template()
    bouts = contact_bouts(inp.observations) if bouts is None else list(bouts)
    prob = Stage2Problem(template, shape, inp.observations, inp.intrinsics, inp.preset,
                         stage1_extr, bouts)
    x0 = prob.pack(inp.poses, stage1_extr)
    f0, _ = value_and_grad(prob, x0)
    if not np.isfinite(f0):
        raise ValidationError("stage 2 objective is not finite at the initial design")
    res: OptimResult = minimize(lambda x: value_and_grad(prob, x), x0, cfg)
    poses, extr = prob.unpack(res.x)
    log.info("stage 2: %s after %d iterations, J %.6g -> %.6g", res.status, res.n_iter,
             res.trace[0], res.fun)
    return RefinementResult(
        poses=poses, shape=shape, extrinsics=extr, stage2_trace=list(res.trace),
        status={"stage2": res.status}, bouts=bouts, terms=evaluate_terms(prob, res.x),
        floor_height=estimate_floor(template, shape, poses, bouts),
    )


def estimate_floor(template, shape, poses: PoseSequence, bouts) -> float:
    """5th percentile of in-bout heel/toe heights (all frames if no bouts)."""
    _, kp, _ = body.sequence_positions(shape, poses, template)
    return floor_from_contacts(kp[:, template.contact_indices], bouts)


def floor_from_contacts(points, bouts) -> float:
    """Floor height from (F, 4, 3) heel/toe positions and their contact bouts."""
    feet = np.asarray(points)[..., 1]
    heights = [feet[b.start:b.end + 1, b.channel] for b in bouts]
    pool = np.concatenate(heights) if heights else feet.ravel()
    return float(np.percentile(pool, FLOOR_PERCENTILE))


def refine(inp: RefinementInput, cfg: OptimizerConfig = OptimizerConfig(),
           template: SkeletonTemplate | None = None) -> RefinementResult:
    template = template or body.default_template()
    shape, extr1, r1 = run_stage1(inp, cfg, template)
    result = run_stage2(inp, shape, extr1, cfg, template)
    result.stage1_trace = list(r1.trace)
    result.status = {"stage1": r1.status, **result.status}
    _, _, markers = body.sequence_positions(shape, result.poses, template)
    fr = inp.observations.frame_rate
    flat = markers.reshape(len(markers), -1)
    result.markers = lowpass(flat, inp.preset.filter_cutoff_hz, fr).reshape(markers.shape)
    result.static_markers = body.static_markers(shape, template)
    return result
