"""Constrained kinematic skeleton: scaling and marker-based inverse kinematics.

Each segment's joint is an ordered chain of elementary rotations and
translations. An elementary transform is driven either by one of the 33
independent coordinates or by a cubic spline of another coordinate (the knee
abduction and rotation axes follow knee flexion). Segment scale factors
stretch the child joint offsets, markers and contact spheres attached to a
segment.
"""

from __future__ import annotations

import copy
import json
import math
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation

from .errors import RangeError, ScalingError, ShapeMismatchError, StructureError

log = logging.getLogger(__name__)

N_COORDINATES = 33
RANGE_TOL = 1e-9
MIN_PAIR_DISTANCE = 1e-3

_EYE = np.eye(3)

IK_DAMPING = 1e-4
IK_MAX_ITER = 50
IK_STEP_TOL = 1e-8
RESEED_RMS = 5e-3  # warm-started frames worse than this are re-seeded


@dataclass
class Transform:
    segment: int
    kind: str  # "rotation" | "translation"
    axis: np.ndarray
    coordinate: int  # driving coordinate index
    spline: CubicSpline | None = None  # set for coupled transforms
    name: str = ""

    def __post_init__(self):
        a = self.axis
        k = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
        self._k, self._kk = k, k @ k

    def matrix(self, angle):
        return _EYE + math.sin(angle) * self._k + (1.0 - math.cos(angle)) * self._kk

    def value(self, q):
        x = q[self.coordinate]
        if self.spline is None:
            return x, 1.0
        lo, hi = self.spline.x[0], self.spline.x[-1]
        xc = min(max(x, lo), hi)
        slope = float(self.spline(xc, 1)) if lo < x < hi else 0.0
        return float(self.spline(xc)), slope


@dataclass
class BiomechModel:
    segment_names: list
    parents: list  # -1 for the root
    offsets: np.ndarray  # (S, 3) joint location in the parent frame, unscaled
    transforms: list  # Transform, grouped by segment in chain order
    coordinate_names: list
    coordinate_types: list
    ranges: np.ndarray  # (33, 2)
    marker_names: list
    marker_segments: np.ndarray
    marker_offsets: np.ndarray  # unscaled local positions
    scales: np.ndarray  # (S,)
    scaling_pairs: dict = field(default_factory=dict)
    scale_like: dict = field(default_factory=dict)
    contact_spheres: list = field(default_factory=list)
    contact_defaults: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n = len(self.segment_names)
        if len(self.coordinate_names) != N_COORDINATES:
            raise StructureError(f"model has {len(self.coordinate_names)} coordinates, "
                                 f"expected {N_COORDINATES}")
        if np.any(self.marker_segments < 0) or np.any(self.marker_segments >= n):
            raise StructureError("marker attached to a missing segment")
        self.order = self._topological_order()
        self._by_segment = [[t for t in self.transforms if t.segment == s] for s in range(n)]
        below = np.zeros((n, n), dtype=bool)  # below[s, k]: k in subtree of s
        for k in range(n):
            s = k
            while s >= 0:
                below[s, k] = True
                s = self.parents[s]
        self._marker_below = below[:, self.marker_segments]  # (S, M)

    def _topological_order(self):
        roots = [i for i, p in enumerate(self.parents) if p < 0]
        if len(roots) != 1:
            raise StructureError("model needs exactly one root segment")
        out, stack = [], roots
        children = {i: [] for i in range(len(self.parents))}
        for i, p in enumerate(self.parents):
            if p >= 0:
                children[p].append(i)
        while stack:
            i = stack.pop()
            out.append(i)
            stack.extend(reversed(children[i]))
        if len(out) != len(self.parents):
            raise StructureError("segment tree has a cycle")
        return out

    # -- construction / serialization ----------------------------------------------

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format_version") != 1:
            raise StructureError("unsupported biomech model format_version")
        segs = doc["segments"]
        names = [s["name"] for s in segs]
        idx = {n: i for i, n in enumerate(names)}
        try:
            parents = [-1 if s["parent"] is None else idx[s["parent"]] for s in segs]
        except KeyError as exc:
            raise StructureError(f"unknown parent segment {exc}") from None
        coord_names = [c["name"] for c in doc["coordinates"]]
        cidx = {n: i for i, n in enumerate(coord_names)}
        transforms = []
        for si, s in enumerate(segs):
            for tr in s.get("joint", []):
                axis = np.asarray(tr["axis"], dtype=float)
                axis = axis / np.linalg.norm(axis)
                if "coupled" in tr:
                    sp = tr["spline"]
                    spline = CubicSpline(np.asarray(sp["knots"], float),
                                         np.asarray(sp["values"], float))
                    transforms.append(Transform(si, tr["type"], axis, cidx[tr["driver"]],
                                                spline, tr["coupled"]))
                else:
                    transforms.append(Transform(si, tr["type"], axis, cidx[tr["coordinate"]],
                                                None, tr["coordinate"]))
        driven = {t.coordinate for t in transforms if t.spline is None}
        if driven != set(range(len(coord_names))):
            raise StructureError("every coordinate must drive exactly one transform")
        mk = doc["markers"]
        return cls(
            segment_names=names,
            parents=parents,
            offsets=np.array([s["offset"] for s in segs], dtype=float),
            transforms=transforms,
            coordinate_names=coord_names,
            coordinate_types=[c["type"] for c in doc["coordinates"]],
            ranges=np.array([c["range"] for c in doc["coordinates"]], dtype=float),
            marker_names=[m["name"] for m in mk],
            marker_segments=np.array([idx[m["segment"]] for m in mk], dtype=int),
            marker_offsets=np.array([m["offset"] for m in mk], dtype=float),
            scales=np.array([s.get("scale", 1.0) for s in segs], dtype=float),
            scaling_pairs=doc.get("scaling_pairs", {}),
            scale_like=doc.get("scale_like", {}),
            contact_spheres=doc.get("contact_spheres", []),
            contact_defaults=doc.get("contact_defaults", {}),
            source=doc,
        )

    @classmethod
    def load(cls, path=None):
        if path is None:
            text = resources.files("monokin.data").joinpath("biomech_model.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_dict(json.loads(text))

    def to_dict(self):
        doc = copy.deepcopy(self.source)
        for seg, s in zip(doc["segments"], self.scales):
            seg["scale"] = float(s)
        return doc

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    def moved_rigidly(self, q_traj, rot, trans):
        """Coordinates of the same motion after mapping the world by x -> rot x + trans."""
        root = self.order[0]
        chain = self._by_segment[root]
        tr = [t for t in chain if t.kind == "translation"]
        rt = [t for t in chain if t.kind == "rotation"]
        seq = "".join("XYZ"[int(np.argmax(np.abs(t.axis)))] for t in rt)
        if len(tr) != 3 or len(rt) != 3 or len(set(seq)) != 3:
            raise StructureError("root joint must be 3 translations then 3 rotations")
        if np.any(self.offsets[root]):
            raise StructureError("root segment must sit at the world origin")
        q = np.array(q_traj, dtype=float, ndmin=2)
        out = q.copy()
        ti = [t.coordinate for t in tr]
        ri = [t.coordinate for t in rt]
        out[:, ti] = q[:, ti] @ rot.T + trans
        signs = np.array([np.sign(t.axis[np.argmax(np.abs(t.axis))]) for t in rt])
        r0 = Rotation.from_euler(seq, q[:, ri] * signs)
        out[:, ri] = (Rotation.from_matrix(rot) * r0).as_euler(seq) * signs
        return out

    def with_scales(self, scales):
        new = copy.copy(self)
        new.scales = np.asarray(scales, dtype=float).copy()
        return new

    # -- queries ----------------------------------------------------------------------

    @property
    def n_segments(self):
        return len(self.segment_names)

    def coordinate_index(self, name):
        return self.coordinate_names.index(name)

    def segment_index(self, name):
        return self.segment_names.index(name)

    def neutral(self):
        return np.zeros(N_COORDINATES)

    @property
    def rotational(self):
        return np.array([t == "rotation" for t in self.coordinate_types])

    def coupled_transforms(self):
        return [t for t in self.transforms if t.spline is not None]

    def check_range(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape != (N_COORDINATES,):
            raise ShapeMismatchError(f"expected {N_COORDINATES} coordinates, got {q.shape}")
        lo, hi = self.ranges[:, 0] - RANGE_TOL, self.ranges[:, 1] + RANGE_TOL
        bad = np.flatnonzero((q < lo) | (q > hi))
        if bad.size:
            names = ", ".join(self.coordinate_names[i] for i in bad[:5])
            raise RangeError(f"coordinates out of range: {names}")
        return q

    def clamp(self, q):
        return np.clip(q, self.ranges[:, 0], self.ranges[:, 1])

    # -- kinematics ----------------------------------------------------------------------

    def segment_frames(self, q):
        """World rotations (S, 3, 3) and origins (S, 3)."""
        rots, origins, _ = self._kinematics(np.asarray(q, dtype=float), record=False)
        return rots, origins

    def segment_frame(self, q, segment):
        """World rotation and origin of one segment, walking only its ancestor path."""
        path = []
        s = segment
        while s >= 0:
            path.append(s)
            s = self.parents[s]
        r, o = np.eye(3), None
        for s in reversed(path):
            p = self.parents[s]
            o = self.offsets[s].copy() if p < 0 else o + r @ (self.scales[p] * self.offsets[s])
            for t in self._by_segment[s]:
                v, _ = t.value(q)
                if t.kind == "rotation":
                    r = r @ t.matrix(v)
                else:
                    o = o + (r @ t.axis) * v
        return r, o

    def _kinematics(self, q, record):
        n = self.n_segments
        rots = np.empty((n, 3, 3))
        origins = np.empty((n, 3))
        records = []
        for s in self.order:
            p = self.parents[s]
            if p < 0:
                r = np.eye(3)
                o = self.offsets[s].copy()
            else:
                r = rots[p]
                o = origins[p] + r @ (self.scales[p] * self.offsets[s])
            for t in self._by_segment[s]:
                v, slope = t.value(q)
                if t.kind == "rotation":
                    if record:
                        records.append((t, slope, r @ t.axis, o.copy()))
                    r = r @ t.matrix(v)
                else:
                    step = r @ t.axis
                    if record:
                        records.append((t, slope, step, None))
                    o = o + step * v
            rots[s] = r
            origins[s] = o
        return rots, origins, records

    def _markers_from(self, rots, origins):
        seg = self.marker_segments
        local = self.scales[seg, None] * self.marker_offsets
        return origins[seg] + np.einsum("mij,mj->mi", rots[seg], local)

    def fk_with_jacobian(self, q):
        """Markers (M, 3) and their Jacobian (M, 3, 33)."""
        rots, origins, records = self._kinematics(q, record=True)
        m = self._markers_from(rots, origins)
        jac = np.zeros((len(m), 3, N_COORDINATES))
        for t, slope, vec, pivot in records:
            if slope == 0.0:
                continue
            mask = self._marker_below[t.segment]
            if t.kind == "rotation":
                jac[mask, :, t.coordinate] += slope * np.cross(vec, m[mask] - pivot)
            else:
                jac[mask, :, t.coordinate] += slope * vec
        return m, jac

    def sphere_positions(self, q, spheres):
        rots, origins = self.segment_frames(q)
        out = np.empty((len(spheres), 3))
        for i, sp in enumerate(spheres):
            s = sp.segment
            out[i] = origins[s] + rots[s] @ (self.scales[s] * sp.position)
        return out


def model_fk(model: BiomechModel, q) -> np.ndarray:
    """World positions of the model markers for one coordinate vector."""
    q = model.check_range(q)
    rots, origins, _ = model._kinematics(q, record=False)
    return model._markers_from(rots, origins)


# -- scaling ------------------------------------------------------------------------------

def scale_model(static_markers, generic: BiomechModel) -> BiomechModel:
    """Per-segment scale factors from marker-pair distance ratios.

    Pair distances are compared against the generic model in its neutral
    pose; the result composes with any scaling already on ``generic``.
    """
    static_markers = np.asarray(static_markers, dtype=float)
    if static_markers.shape != (len(generic.marker_names), 3):
        raise ShapeMismatchError("static marker array does not match the model marker set")
    ref = model_fk(generic, generic.neutral())
    idx = {n: i for i, n in enumerate(generic.marker_names)}
    factors = np.ones(generic.n_segments)
    for seg_name, pairs in generic.scaling_pairs.items():
        ratios = []
        for a, b in pairs:
            d_meas = np.linalg.norm(static_markers[idx[a]] - static_markers[idx[b]])
            d_ref = np.linalg.norm(ref[idx[a]] - ref[idx[b]])
            if d_meas < MIN_PAIR_DISTANCE or d_ref < MIN_PAIR_DISTANCE:
                raise ScalingError(f"marker pair {a}-{b} is degenerate "
                                   f"({d_meas * 1000:.3f} mm)")
            ratios.append(d_meas / d_ref)
        factors[generic.segment_index(seg_name)] = np.mean(ratios)
    for seg_name, like in generic.scale_like.items():
        factors[generic.segment_index(seg_name)] = factors[generic.segment_index(like)]
    return generic.with_scales(generic.scales * factors)


# -- inverse kinematics ----------------------------------------------------------------

@dataclass
class IKResult:
    q: np.ndarray
    rms: float
    status: str
    n_iter: int
    clamped: list = field(default_factory=list)


def _kabsch(local, world):
    rot, _ = Rotation.align_vectors(world - world.mean(0), local - local.mean(0))
    return rot


def _euler_guesses(chain, rel):
    """Both Tait-Bryan solutions of ``rel`` for a chain of three principal axes."""
    idx = [int(np.argmax(np.abs(t.axis))) for t in chain]
    if len(chain) != 3 or len(set(idx)) != 3 or any(t.spline is not None for t in chain):
        return []
    if any(abs(abs(t.axis[i]) - 1.0) > 1e-9 for t, i in zip(chain, idx)):
        return []
    sign = np.array([np.sign(t.axis[i]) for t, i in zip(chain, idx)])
    a = Rotation.from_matrix(rel).as_euler("".join("XYZ"[i] for i in idx))
    alt = np.array([a[0] + np.pi, np.pi - a[1], a[2] + np.pi])
    if idx not in ([0, 1, 2], [1, 2, 0], [2, 0, 1]):
        alt[1] = -np.pi - a[1]
    alt = (alt + np.pi) % (2 * np.pi) - np.pi
    return [a * sign, alt * sign]


def _seed_segments(model: BiomechModel, targets, q):
    """Fit the root rigidly, then each joint in turn with its parent held fixed.

    Each segment is fitted to its own markers plus its joint centre. This
    gives a start close to the global optimum before the coupled solve.
    """
    q = q.copy()
    valid = np.all(np.isfinite(targets), 1)
    lo, hi = model.ranges[:, 0], model.ranges[:, 1]
    root = model.order[0]
    for s in model.order:
        chain = model._by_segment[s]
        free = [t for t in chain if t.spline is None]
        if not free:
            continue
        sel = np.flatnonzero((model.marker_segments == s) & valid)
        rots, origins = model.segment_frames(q)
        local = model.scales[s] * model.marker_offsets[sel]
        world = targets[sel]
        if s == root:
            if sel.size < 3:
                continue
            rot = _kabsch(local, world)
            origin = world.mean(0) - rot.apply(local.mean(0))
            trans = [t for t in free if t.kind == "translation"]
            for t in trans:
                q[t.coordinate] = origin @ t.axis
            parent_rot = np.eye(3)
        else:
            if sel.size == 0:
                continue
            parent_rot = rots[model.parents[s]]
            local = np.vstack([local, np.zeros(3)])
            world = np.vstack([world, origins[s]])
            rot = _kabsch(local, world) if len(local) >= 3 else None
        rot_free = [t for t in free if t.kind == "rotation"]
        cidx = np.array([t.coordinate for t in rot_free])
        if cidx.size == 0:
            continue

        base = origins[s] if s != root else model.segment_frames(q)[1][s]
        seg_local = model.scales[s] * model.marker_offsets[sel]

        def resid(v, cidx=cidx, chain=chain, parent_rot=parent_rot, base=base,
                  seg_local=seg_local, world=targets[sel]):
            qq = q.copy()
            qq[cidx] = v
            r = parent_rot
            for t in chain:
                if t.kind == "rotation":
                    r = r @ t.matrix(t.value(qq)[0])
            return (base + seg_local @ r.T - world).ravel()

        starts = [q[cidx], np.zeros(cidx.size)]
        if rot is not None:
            starts += _euler_guesses(rot_free, parent_rot.T @ rot.as_matrix())
        if cidx.size <= 2:
            grid = np.linspace(0.1, 0.9, 4)
            axes = [lo[c] + grid * (hi[c] - lo[c]) for c in cidx]
            starts += [np.array(v) for v in np.array(np.meshgrid(*axes)).reshape(cidx.size, -1).T]
        best = None
        for x0 in starts:
            x0 = np.clip(x0, lo[cidx], hi[cidx])
            sol = least_squares(resid, x0, bounds=(lo[cidx], hi[cidx] + 1e-12), xtol=1e-10)
            if best is None or sol.cost < best.cost:
                best = sol
        q[cidx] = best.x
    return model.clamp(q)


def ik_frame(model: BiomechModel, target_markers, q_init=None, weights=None,
             damping=IK_DAMPING, max_iter=IK_MAX_ITER, step_tol=IK_STEP_TOL) -> IKResult:
    """Damped Gauss-Newton marker tracking with coordinates clamped to ranges.

    ``q_init=None`` seeds every joint segment by segment from the markers.
    NaN targets are ignored.
    """
    target = np.asarray(target_markers, dtype=float)
    valid = np.all(np.isfinite(target), axis=1)
    w = np.ones(len(target)) if weights is None else np.asarray(weights, dtype=float)
    w = np.where(valid, w, 0.0)
    sw = np.sqrt(w)[:, None]
    tgt = np.where(valid[:, None], target, 0.0)

    if q_init is None:
        q = _seed_segments(model, target, model.neutral())
    else:
        q = model.clamp(np.asarray(q_init, dtype=float))

    def residual(qq):
        m, jac = model.fk_with_jacobian(qq)
        r = (sw * (m - tgt)).ravel()
        return r, (sw[:, :, None] * jac).reshape(-1, N_COORDINATES)

    r, jac = residual(q)
    cost = r @ r
    lam = damping
    status = "max_iter"
    it = 0
    eye = np.eye(N_COORDINATES)
    for it in range(1, max_iter + 1):
        jtj = jac.T @ jac
        g = jac.T @ r
        accepted = False
        for _ in range(12):
            dq = -np.linalg.solve(jtj + lam * eye, g)
            q_new = model.clamp(q + dq)
            r_new, jac_new = residual(q_new)
            cost_new = r_new @ r_new
            if cost_new <= cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            status = "stalled"
            break
        step = np.max(np.abs(q_new - q))
        q, r, jac, cost = q_new, r_new, jac_new, cost_new
        lam = max(lam / 10.0, damping)
        if step < step_tol:
            status = "converged"
            break
    if status != "converged":
        log.debug("ik_frame stopped with status %s after %d iterations", status, it)
    m = model_fk(model, q)
    # weighted RMS of the per-marker 3D distance
    rms = float(np.sqrt(np.sum(w[:, None] * (m - tgt) ** 2) / max(w.sum(), 1e-12)))
    at_bound = np.flatnonzero((q <= model.ranges[:, 0]) | (q >= model.ranges[:, 1]))
    clamped = [model.coordinate_names[i] for i in at_bound]
    return IKResult(q, rms, status, it, clamped)


@dataclass
class IKSequenceResult:
    q: np.ndarray  # (F, 33)
    rms: np.ndarray  # (F,)
    status: list
    clamped: list


def ik_sequence(model: BiomechModel, marker_trajectories, weights=None) -> IKSequenceResult:
    """Frame-by-frame IK, each frame warm-started from the previous solution."""
    traj = np.asarray(marker_trajectories, dtype=float)
    if traj.ndim != 3 or traj.shape[1:] != (len(model.marker_names), 3):
        raise ShapeMismatchError("marker trajectories must be (frames, markers, 3)")
    qs, rms, status, clamped = [], [], [], []
    q_prev = None
    for i, frame in enumerate(traj):
        try:
            res = ik_frame(model, frame, q_prev, weights)
            if q_prev is not None and res.rms > max(2.0 * rms[-1], RESEED_RMS):
                cold = ik_frame(model, frame, None, weights)
                if cold.rms < res.rms:
                    res = cold
        except Exception as exc:
            raise type(exc)(f"frame {i}: {exc}") from exc
        qs.append(res.q)
        rms.append(res.rms)
        status.append(res.status)
        clamped.append(res.clamped)
        q_prev = res.q
    return IKSequenceResult(np.array(qs), np.array(rms), status, clamped)
