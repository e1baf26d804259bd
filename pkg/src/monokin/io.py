"""File formats: input bundles, marker (TRC), coordinate and GRF tables, JSON results."""

from __future__ import annotations

import csv
import json
import math
import shutil
import tarfile
import tempfile
import zipfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import model as body
from .camera import (CameraExtrinsics, CameraIntrinsics, IntrinsicsDatabase,
                     lookup_intrinsics)
from .dynamics import SIDES, GrfFrame
from .errors import SchemaError, ValidationError
from .model import CONTACT_CHANNELS, BodyShape, PoseSequence
from .objective import ObservationSet, RefinementPreset, preset_for_activity
from .refine import RefinementInput, RefinementResult

FORMAT_VERSION = 1
BUNDLE_FILES = ("pose_initial.json", "keypoints2d.csv", "contacts.csv", "camera.json",
                "meta.json")
GRF_FIELDS = ("Fx", "Fy", "Fz", "COPx", "COPz", "Ty")


def _fmt(x):
    return "nan" if not math.isfinite(x) else f"{x:.10f}"


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc


# -- TRC markers ------------------------------------------------------------------------

def write_trc(path, names, trajectories, frame_rate, units="m"):
    """Tab-separated TRC marker file, one X/Y/Z column triple per marker."""
    traj = np.asarray(trajectories, dtype=float)
    n_frames, n_markers = traj.shape[:2]
    if len(names) != n_markers:
        raise SchemaError("marker names and trajectories differ in count")
    rate = f"{frame_rate:g}"
    lines = [
        f"PathFileType\t4\t(X/Y/Z)\t{Path(path).name}",
        "DataRate\tCameraRate\tNumFrames\tNumMarkers\tUnits\tOrigDataRate\t"
        "OrigDataStartFrame\tOrigNumFrames",
        f"{rate}\t{rate}\t{n_frames}\t{n_markers}\t{units}\t{rate}\t1\t{n_frames}",
        "Frame#\tTime\t" + "\t".join(f"{n}\t\t" for n in names).rstrip("\t"),
        "\t\t" + "\t".join(f"X{i}\tY{i}\tZ{i}" for i in range(1, n_markers + 1)),
        "",
    ]
    for f in range(n_frames):
        vals = "\t".join(_fmt(v) for v in traj[f].ravel())
        lines.append(f"{f + 1}\t{f / frame_rate:.6f}\t{vals}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_trc(path):
    """Returns ``(names, trajectories (F, M, 3) in metres, frame_rate)``."""
    rows = Path(path).read_text().splitlines()
    if len(rows) < 5 or not rows[0].startswith("PathFileType"):
        raise SchemaError(f"{path}: not a TRC file")
    keys = rows[1].split("\t")
    vals = rows[2].split("\t")
    hdr = dict(zip(keys, vals))
    try:
        rate = float(hdr["DataRate"])
        n_markers = int(hdr["NumMarkers"])
        units = hdr.get("Units", "m")
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"{path}: bad TRC header") from exc
    names = [n for n in rows[3].split("\t")[2:] if n.strip()]
    if len(names) != n_markers:
        raise SchemaError(f"{path}: header lists {len(names)} of {n_markers} markers")
    data = [r.split("\t") for r in rows[5:] if r.strip()]
    try:
        arr = np.array([[float(v) for v in r[2:2 + 3 * n_markers]] for r in data])
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric marker value") from exc
    if arr.ndim != 2 or arr.shape[1] != 3 * n_markers:
        raise SchemaError(f"{path}: rows do not hold {n_markers} markers")
    scale = {"m": 1.0, "mm": 1e-3, "cm": 1e-2}.get(units)
    if scale is None:
        raise SchemaError(f"{path}: unknown units {units!r}")
    return names, arr.reshape(len(arr), n_markers, 3) * scale, rate


# -- coordinate and GRF tables --------------------------------------------------------------

def write_coordinates(path, names, q, frame_rate, rotational=None, t0=0.0):
    """Tab-separated: time then one column per coordinate; rotations in degrees."""
    q = np.array(q, dtype=float)
    if rotational is not None:
        q[:, np.asarray(rotational, dtype=bool)] = np.rad2deg(q[:, np.asarray(rotational, dtype=bool)])
    lines = ["time\t" + "\t".join(names)]
    for f, row in enumerate(q):
        lines.append(f"{t0 + f / frame_rate:.6f}\t" + "\t".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_table(path):
    """Returns ``(column names, (F, C) array)`` of a tab-separated numeric table."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    if not rows:
        raise SchemaError(f"{path}: empty table")
    header = rows[0]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric value") from exc
    if data.size and data.shape[1] != len(header):
        raise SchemaError(f"{path}: rows and header differ in width")
    return header, data.reshape(-1, len(header))


def read_coordinates(path, rotational_names=()):
    """Returns ``(names, q (F, C) with rotations in radians, times)``."""
    header, data = read_table(path)
    if header[0] != "time":
        raise SchemaError(f"{path}: first column must be time")
    names = header[1:]
    q = data[:, 1:].copy()
    rot = [i for i, n in enumerate(names) if n in set(rotational_names)]
    q[:, rot] = np.deg2rad(q[:, rot])
    return names, q, data[:, 0]


def grf_columns():
    return ["time"] + [f"{s.upper()}_{f}" for s in SIDES for f in GRF_FIELDS]


def write_grf(path, grf: list[GrfFrame]):
    """Columns time, {R,L}x{Fx,Fy,Fz,COPx,COPz,Ty}; N, m, N m. CoP is nan off the floor."""
    lines = ["\t".join(grf_columns())]
    for g in grf:
        vals = [g.time]
        for s in SIDES:
            cop = g.cop[s]
            cx, cz = (math.nan, math.nan) if cop is None else (cop[0], cop[2])
            vals += [*g.force[s], cx, cz, g.free_moment[s]]
        lines.append("\t".join(_fmt(float(v)) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def read_grf(path):
    """Returns ``(times, forces (F, 2, 3), cop (F, 2, 2), free moment (F, 2))``."""
    header, data = read_table(path)
    if header != grf_columns():
        raise SchemaError(f"{path}: unexpected GRF columns")
    body_ = data[:, 1:].reshape(len(data), len(SIDES), len(GRF_FIELDS))
    return data[:, 0], body_[:, :, :3], body_[:, :, 3:5], body_[:, :, 5]


# -- input bundle ---------------------------------------------------------------------------

def pose_doc(poses: PoseSequence, shape: BodyShape, extr: CameraExtrinsics, suffix="0"):
    return {
        "format_version": FORMAT_VERSION,
        "frame_rate": poses.frame_rate,
        f"theta{suffix}": poses.joint_rotations.tolist(),
        f"tau{suffix}": poses.root_translation.tolist(),
        f"Gamma{suffix}": poses.root_orientation.tolist(),
        f"beta{suffix}": shape.coeffs.tolist(),
        f"xi{suffix}": extr.to_dict(),
    }


def parse_pose_doc(doc, suffix="0"):
    try:
        poses = PoseSequence(np.array(doc[f"theta{suffix}"]), np.array(doc[f"tau{suffix}"]),
                             np.array(doc[f"Gamma{suffix}"]), float(doc["frame_rate"]))
        shape = BodyShape(np.array(doc[f"beta{suffix}"]))
        extr = CameraExtrinsics.from_dict(doc[f"xi{suffix}"])
    except KeyError as exc:
        raise SchemaError(f"pose document lacks field {exc.args[0]!r}") from exc
    return poses, shape, extr


def write_bundle(directory, inp: RefinementInput, activity: str,
                 template: body.SkeletonTemplate | None = None, device=None):
    template = template or body.default_template()
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_json(d / "pose_initial.json", pose_doc(inp.poses, inp.shape, inp.extrinsics))
    obs = inp.observations
    kp_rows = ["frame,keypoint,u,v,confidence"]
    for f in range(obs.n_frames):
        for k in range(obs.n_keypoints):
            u, v = obs.keypoints[f, k]
            kp_rows.append(f"{f},{template.keypoint_names[k]},{_fmt(u)},{_fmt(v)},"
                           f"{_fmt(obs.confidences[f, k])}")
    (d / "keypoints2d.csv").write_text("\n".join(kp_rows) + "\n")
    c_rows = ["frame,channel,probability"]
    for f in range(obs.n_frames):
        for c, name in enumerate(CONTACT_CHANNELS):
            c_rows.append(f"{f},{name},{_fmt(obs.contacts[f, c])}")
    (d / "contacts.csv").write_text("\n".join(c_rows) + "\n")
    cam = {"format_version": FORMAT_VERSION, "intrinsics": inp.intrinsics.to_dict()}
    if device is not None:
        cam["device"] = device
    write_json(d / "camera.json", cam)
    write_json(d / "meta.json", {"format_version": FORMAT_VERSION,
                                 "subject_height": obs.subject_height,
                                 "frame_rate": obs.frame_rate, "activity": activity})


@contextmanager
def bundle_directory(path):
    """Yields a directory holding the bundle; archives are unpacked to a temp dir."""
    p = Path(path)
    if p.is_dir():
        yield p
        return
    if not p.exists():
        raise FileNotFoundError(f"input bundle {p} not found")
    tmp = Path(tempfile.mkdtemp(prefix="monokin-"))
    try:
        if zipfile.is_zipfile(p):
            with zipfile.ZipFile(p) as zf:
                zf.extractall(tmp)
        elif tarfile.is_tarfile(p):
            with tarfile.open(p) as tf:
                if hasattr(tarfile, "data_filter"):
                    tf.extractall(tmp, filter="data")
                else:
                    tf.extractall(tmp)
        else:
            raise ValidationError(f"{p} is neither a directory nor a zip/tar archive")
        found = [q.parent for q in tmp.rglob("meta.json")]
        if len(found) != 1:
            raise SchemaError(f"{p}: expected exactly one bundle inside the archive")
        yield found[0]
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _index(name, names, what):
    try:
        return int(name)
    except ValueError:
        pass
    try:
        return names.index(name)
    except ValueError as exc:
        raise SchemaError(f"unknown {what} {name!r}") from exc


def _read_long_csv(path, key, names, n_frames, value_cols):
    out = np.full((n_frames, len(names), len(value_cols)), np.nan)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"frame", key, *value_cols} - set(reader.fieldnames or ())
        if missing:
            raise SchemaError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            f = int(row["frame"])
            i = _index(row[key], list(names), key)
            if not (0 <= f < n_frames and 0 <= i < len(names)):
                raise SchemaError(f"{path}: frame {f} / {key} {row[key]} out of range")
            out[f, i] = [float(row[c]) for c in value_cols]
    if np.isnan(out).any():
        raise SchemaError(f"{path}: incomplete table (missing frame/{key} rows)")
    return out


def read_bundle(path, presets: dict[str, RefinementPreset],
                template: body.SkeletonTemplate | None = None,
                intrinsics_db: IntrinsicsDatabase | None = None, activity=None):
    """Returns ``(RefinementInput, meta dict)``. ``activity`` overrides meta.json."""
    template = template or body.default_template()
    with bundle_directory(path) as d:
        for name in BUNDLE_FILES:
            if not (d / name).is_file():
                raise FileNotFoundError(f"input bundle lacks {name}")
        meta = read_json(d / "meta.json")
        poses, shape, extr = parse_pose_doc(read_json(d / "pose_initial.json"))
        n = len(poses)
        kp = _read_long_csv(d / "keypoints2d.csv", "keypoint", template.keypoint_names, n,
                            ("u", "v", "confidence"))
        con = _read_long_csv(d / "contacts.csv", "channel", CONTACT_CHANNELS, n,
                             ("probability",))[..., 0]
        cam = read_json(d / "camera.json")
    if "intrinsics" in cam:
        intr = CameraIntrinsics.from_dict(cam["intrinsics"])
    elif "device" in cam:
        db = intrinsics_db or IntrinsicsDatabase.load()
        intr = lookup_intrinsics(db, cam["device"], tuple(cam["resolution"]))
    else:
        raise SchemaError("camera.json needs intrinsics or device + resolution")
    try:
        height, rate = float(meta["subject_height"]), float(meta["frame_rate"])
    except KeyError as exc:
        raise SchemaError(f"meta.json lacks {exc.args[0]!r}") from exc
    if abs(rate - poses.frame_rate) > 1e-9:
        raise ValidationError("frame rates of meta.json and pose_initial.json differ")
    activity = activity or meta.get("activity", "other")
    meta = {**meta, "activity": activity}
    obs = ObservationSet(kp[..., :2], kp[..., 2], con, rate, height)
    inp = RefinementInput(poses=poses, shape=BodyShape(shape.coeffs, shape.coeffs),
                          extrinsics=extr, observations=obs, intrinsics=intr,
                          preset=preset_for_activity(presets, activity))
    return inp, meta


def result_doc(res: RefinementResult):
    doc = pose_doc(res.poses, res.shape, res.extrinsics, suffix="")
    doc["floor_height"] = res.floor_height
    return doc


def report_doc(res: RefinementResult, preset: RefinementPreset, extra=None):
    return {
        "format_version": FORMAT_VERSION,
        "preset": preset.name,
        "status": res.status,
        "stage1_trace": [float(v) for v in res.stage1_trace],
        "stage2_trace": [float(v) for v in res.stage2_trace],
        "terms": res.terms,
        "bouts": [[CONTACT_CHANNELS[b.channel], b.start, b.end] for b in res.bouts],
        "floor_height": res.floor_height,
        **(extra or {}),
    }
