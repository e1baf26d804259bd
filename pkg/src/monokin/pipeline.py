"""Refinement followed by marker-based IK and contact forces, plus evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import model as body
from .biomech import BiomechModel, IKSequenceResult, ik_sequence, scale_model
from .dynamics import detect_stance, force_array, grf_sequence
from .metrics import EvalReport, apply_rigid, camera_alignment, score
from .optim import OptimizerConfig
from .refine import (RefinementInput, RefinementResult, contact_bouts, floor_from_contacts,
                     refine)
from .synth import SyntheticCase

log = logging.getLogger(__name__)


@dataclass
class PipelineResult:
    refinement: RefinementResult | None
    model: BiomechModel  # scaled subject
    markers: np.ndarray  # (F, 38, 3) as fed to IK
    contacts: np.ndarray  # (F, 4, 3) heel/toe keypoints, same frame as the markers
    ik: IKSequenceResult
    floor_height: float
    grf: list


def _finish(model, markers, contacts, bouts, frame_rate, refinement=None):
    ik = ik_sequence(model, markers)
    floor = floor_from_contacts(contacts, bouts)
    grf = grf_sequence(model, ik.q, floor, frame_rate)
    return PipelineResult(refinement, model, markers, contacts, ik, floor, grf)


def run_pipeline(inp: RefinementInput, generic: BiomechModel | None = None,
                 cfg: OptimizerConfig = OptimizerConfig(),
                 template: body.SkeletonTemplate | None = None,
                 world=None) -> PipelineResult:
    """refine -> scale -> IK -> GRF.

    ``world`` optionally maps the refined reconstruction rigidly before IK:
    either ``(R, t)`` or a callable taking the RefinementResult and returning one.
    """
    template = template or body.default_template()
    generic = generic or BiomechModel.load()
    res = refine(inp, cfg, template)
    _, kp, _ = body.sequence_positions(res.shape, res.poses, template)
    markers, contacts = res.markers, kp[:, template.contact_indices]
    if callable(world):
        world = world(res)
    if world is not None:
        markers, contacts = apply_rigid(markers, *world), apply_rigid(contacts, *world)
    subject = scale_model(res.static_markers, generic)
    return _finish(subject, markers, contacts, res.bouts, inp.observations.frame_rate, res)


def baseline_pipeline(inp: RefinementInput, generic: BiomechModel | None = None,
                      template: body.SkeletonTemplate | None = None) -> PipelineResult:
    """IK straight on the unrefined initial estimate, for comparison."""
    template = template or body.default_template()
    generic = generic or BiomechModel.load()
    _, kp, markers = body.sequence_positions(inp.shape, inp.poses, template)
    subject = scale_model(body.static_markers(inp.shape, template), generic)
    bouts = contact_bouts(inp.observations)
    return _finish(subject, markers, kp[:, template.contact_indices], bouts,
                   inp.observations.frame_rate)


def evaluate(case: SyntheticCase, result: PipelineResult) -> EvalReport:
    extras = {
        "ik_rms_m": float(np.mean(result.ik.rms)),
        "floor_height_m": result.floor_height,
        "stance_detected": {k: [list(s) for s in v]
                            for k, v in detect_stance(result.grf).items()},
    }
    if result.refinement is not None:
        extras["status"] = result.refinement.status
        extras["terms"] = result.refinement.terms
    return score(result.ik.q, result.model.coordinate_names, case.q,
                 case.model.coordinate_names, case.repetitions,
                 force_array(result.grf), force_array(case.grf), case.stance,
                 case.body_weight, result.contacts, case.true_bouts, case.floor_height,
                 extras)


def run_case(case: SyntheticCase, cfg: OptimizerConfig = OptimizerConfig(),
             generic: BiomechModel | None = None, align: bool = True):
    """Refine a synthetic case and score it.

    With ``align`` the reconstruction is first mapped into the true world
    through the refined and true cameras, so that only what the camera can
    see is scored.
    """
    world = (lambda res: camera_alignment(res.extrinsics, case.extrinsics)) if align else None
    out = run_pipeline(case.input, generic, cfg, case.template, world)
    return out, evaluate(case, out)
