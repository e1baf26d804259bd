"""Command line entry point: refine, ik, grf, synth and eval subcommands."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np
import torch

from . import io
from . import model as body
from .biomech import BiomechModel, ik_sequence, scale_model
from .camera import CameraExtrinsics
from .dynamics import floor_from_spheres, grf_sequence, spheres_from_model
from .errors import ConvergenceError, MonokinError, NumericalError, SchemaError
from .metrics import apply_rigid, camera_alignment, score
from .objective import ContactBout, load_presets
from .optim import OptimizerConfig
from .refine import refine
from .synth import SyntheticScenario, synth_generate

log = logging.getLogger("monokin")

EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_IO = 0, 2, 3, 4


class Settings:
    """Shipped defaults overlaid with the ``--config`` file."""

    def __init__(self, doc=None, seed=None):
        doc = doc or {}
        unknown = set(doc) - {"format_version", "presets", "optimizer", "contact"}
        if unknown:
            raise SchemaError(f"unknown config sections: {sorted(unknown)}")
        self.presets = load_presets(overrides=doc.get("presets"))
        opt = dict(doc.get("optimizer", {}))
        names = {f.name for f in fields(OptimizerConfig)}
        if set(opt) - names:
            raise SchemaError(f"unknown optimizer settings: {sorted(set(opt) - names)}")
        if seed is not None:
            opt["seed"] = seed
        self.optimizer = OptimizerConfig(**opt)
        self.contact = dict(doc.get("contact", {}))
        self.seed = seed

    @classmethod
    def from_args(cls, args):
        doc = io.read_json(args.config) if args.config else None
        return cls(doc, args.seed)


def _load_model(path):
    return BiomechModel.load(path)


def cmd_refine(args, cfg: Settings):
    template = body.default_template()
    inp, meta = io.read_bundle(args.input, cfg.presets, template, activity=args.activity)
    if args.preset:
        if args.preset not in cfg.presets:
            raise SchemaError(f"unknown preset {args.preset!r}; have {sorted(cfg.presets)}")
        inp = replace(inp, preset=cfg.presets[args.preset])
    log.info("refining %d frames with preset %s", inp.observations.n_frames, inp.preset.name)
    res = refine(inp, cfg.optimizer, template)
    generic = BiomechModel.load()
    subject = scale_model(res.static_markers, generic)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fr = inp.observations.frame_rate
    io.write_json(out / "pose_refined.json", io.result_doc(res))
    io.write_trc(out / "markers.trc", template.marker_names, res.markers, fr)
    io.write_trc(out / "static_markers.trc", template.marker_names, res.static_markers[None], fr)
    subject.save(out / "model_scaled.json")
    io.write_json(out / "report.json", io.report_doc(res, inp.preset,
                                                     {"activity": meta["activity"]}))
    if args.strict and any(s == "max_iter" for s in res.status.values()):
        raise ConvergenceError(f"iteration cap reached: {res.status}")
    return EXIT_OK


def cmd_ik(args, cfg: Settings):
    model = _load_model(args.model)
    names, traj, rate = io.read_trc(args.markers)
    if names != list(model.marker_names):
        raise SchemaError("marker names in the TRC file do not match the model")
    res = ik_sequence(model, traj)
    log.info("IK mean marker RMS %.2f mm", 1e3 * float(np.mean(res.rms)))
    io.write_coordinates(args.out, model.coordinate_names, res.q, rate, model.rotational)
    return EXIT_OK


def cmd_grf(args, cfg: Settings):
    model = _load_model(args.model)
    names, q, times = io.read_coordinates(args.coords, _rotational_names(model))
    if names != list(model.coordinate_names):
        raise SchemaError("coordinate columns do not match the model")
    if len(times) < 2:
        raise SchemaError("coordinates file needs at least 2 frames")
    rate = 1.0 / float(np.mean(np.diff(times)))
    spheres = spheres_from_model(model, cfg.contact)
    if args.floor is not None:
        floor = args.floor
    elif args.floor_from:
        floor = float(io.read_json(args.floor_from)["floor_height"])
    else:
        floor = floor_from_spheres(model, q, spheres)
    grf = grf_sequence(model, q, floor, rate, spheres, t0=float(times[0]))
    io.write_grf(args.out, grf)
    return EXIT_OK


def _rotational_names(model):
    return [n for n, r in zip(model.coordinate_names, model.rotational) if r]


def cmd_synth(args, cfg: Settings):
    path = Path(args.scenario)
    scenario = (SyntheticScenario.load(path) if path.suffix or path.exists()
                else SyntheticScenario.builtin(args.scenario))
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    template = body.default_template()
    case = synth_generate(scenario, template, presets=cfg.presets)
    out = Path(args.out)
    truth = out / "truth"
    truth.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "scenario.json", scenario.to_dict())
    io.write_bundle(out / "input", case.input, scenario.activity, template)
    fr = scenario.frame_rate
    m = case.model
    io.write_coordinates(truth / "coords.tsv", m.coordinate_names, case.q, fr, m.rotational)
    io.write_grf(truth / "grf.tsv", case.grf)
    io.write_trc(truth / "markers.trc", template.marker_names, case.markers, fr)
    io.write_json(truth / "pose_truth.json",
                  io.pose_doc(case.poses, case.shape, case.extrinsics, suffix=""))
    m.save(truth / "model_scaled.json")
    io.write_json(truth / "camera.json", {"format_version": io.FORMAT_VERSION,
                                          "intrinsics": case.intrinsics.to_dict(),
                                          "extrinsics": case.extrinsics.to_dict()})
    io.write_json(truth / "truth.json", {
        "format_version": io.FORMAT_VERSION,
        "repetitions": [int(r) for r in case.repetitions],
        "stance": {k: [list(map(int, s)) for s in v] for k, v in case.stance.items()},
        "bouts": [[b.channel, b.start, b.end] for b in case.true_bouts],
        "body_weight": case.body_weight,
        "floor_height": case.floor_height,
    })
    return EXIT_OK


def cmd_eval(args, cfg: Settings):
    est, truth = Path(args.est), Path(args.truth)
    t_model = _load_model(truth / "model_scaled.json")
    e_model = _load_model(est / "model_scaled.json") if (est / "model_scaled.json").exists() \
        else t_model
    t_names, q_t, _ = io.read_coordinates(truth / "coords.tsv", _rotational_names(t_model))
    e_names, q_e, _ = io.read_coordinates(est / "coords.tsv", _rotational_names(e_model))
    meta = io.read_json(truth / "truth.json")
    template = body.default_template()
    world, contacts = None, None
    refined = est / "pose_refined.json"
    if refined.exists():
        poses, shape, extr = io.parse_pose_doc(io.read_json(refined), suffix="")
        _, kp, _ = body.sequence_positions(shape, poses, template)
        contacts = kp[:, template.contact_indices]
        if args.align:
            cam = io.read_json(truth / "camera.json")
            world = camera_alignment(extr, CameraExtrinsics.from_dict(cam["extrinsics"]))
            contacts = apply_rigid(contacts, *world)
            if e_names != list(e_model.coordinate_names):
                raise SchemaError("estimated coordinates do not match the estimated model")
            q_e = e_model.moved_rigidly(q_e, *world)
    elif args.align:
        log.warning("no pose_refined.json in %s; scoring without camera alignment", est)
    est_f = truth_f = None
    if (est / "grf.tsv").exists():
        _, est_f, _, _ = io.read_grf(est / "grf.tsv")
        _, truth_f, _, _ = io.read_grf(truth / "grf.tsv")
    bouts = [ContactBout(*b) for b in meta["bouts"]]
    stance = {k: [tuple(s) for s in v] for k, v in meta["stance"].items()}
    report = score(q_e, e_names, q_t, t_names, meta["repetitions"], est_f, truth_f, stance,
                   meta["body_weight"], contacts, bouts, meta.get("floor_height", 0.0),
                   {"camera_aligned": world is not None})
    io.write_json(args.report, report.to_dict())
    print(f"rotational MAE {report.rotational_mean:.3f} deg, "
          f"translational MAE {report.translational_mean:.3f} cm, "
          f"final drift {report.drift_curve[-1]:.2f} cm")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="monokin", description=__doc__)
    p.add_argument("--seed", type=int, default=None, help="optimizer / scenario seed")
    p.add_argument("--config", help="JSON overriding presets, optimizer and contact settings")
    p.add_argument("--threads", type=int, default=None, help="CPU threads for torch")
    p.add_argument("--log-level", default="WARNING",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("refine", help="two-stage refinement of an input bundle")
    r.add_argument("--input", required=True, help="bundle directory or zip/tar archive")
    r.add_argument("--preset", help="preset name (default: from the activity)")
    r.add_argument("--activity", help="overrides meta.json")
    r.add_argument("--out", required=True)
    r.add_argument("--strict", action="store_true",
                   help="exit 3 when a stage stops at its iteration cap")
    r.set_defaults(func=cmd_refine)

    k = sub.add_parser("ik", help="marker-based inverse kinematics")
    k.add_argument("--model", required=True)
    k.add_argument("--markers", required=True, help="TRC file")
    k.add_argument("--out", required=True, help="coordinates TSV")
    k.set_defaults(func=cmd_ik)

    g = sub.add_parser("grf", help="ground reaction forces from coordinates")
    g.add_argument("--model", required=True)
    g.add_argument("--coords", required=True)
    g.add_argument("--out", required=True)
    fl = g.add_mutually_exclusive_group()
    fl.add_argument("--floor", type=float, help="floor height in m")
    fl.add_argument("--floor-from", help="refine report.json holding floor_height")
    g.set_defaults(func=cmd_grf)

    s = sub.add_parser("synth", help="synthetic ground truth and corrupted input")
    s.add_argument("--scenario", required=True, help="scenario JSON or built-in name")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("eval", help="score an estimate against synthetic truth")
    e.add_argument("--est", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--no-align", dest="align", action="store_false",
                   help="skip the camera alignment of the estimate")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    if args.threads:
        torch.set_num_threads(args.threads)
    try:
        cfg = Settings.from_args(args)
        return args.func(args, cfg)
    except (ConvergenceError, NumericalError) as exc:
        log.error("%s", exc)
        return EXIT_CONVERGENCE
    except (MonokinError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
