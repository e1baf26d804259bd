"""Ground reaction forces from foot kinematics via smooth Hunt-Crossley spheres.

Forces are evaluated kinematically: each sphere's penetration into the floor
plane y = floor_height and its contact-point velocity give a normal force and
a regularized friction force. Nothing is integrated forward in time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .biomech import BiomechModel
from .errors import ShapeMismatchError, StructureError, ValidationError

SIDES = ("r", "l")
SPHERES_PER_FOOT = 6
COP_MIN_FORCE = 1.0  # N
DEFAULT_STANCE_THRESHOLD = 20.0  # N
GRAVITY = 9.81
UP = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class ContactSphere:
    side: str
    segment: int
    position: np.ndarray  # local, unscaled
    radius: float = 0.032
    stiffness: float = 1.0e6  # N / m^1.5
    dissipation: float = 2.0  # s / m
    static_friction: float = 0.8
    dynamic_friction: float = 0.8
    viscous_friction: float = 0.5
    transition_velocity: float = 0.2  # m / s
    smoothing: float = 0.03125  # activation width as a fraction of the radius

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        if self.side not in SIDES:
            raise ValidationError(f"sphere side must be one of {SIDES}")
        if not self.radius > 0 or not self.stiffness > 0:
            raise ValidationError("sphere radius and stiffness must be positive")
        if self.transition_velocity <= 0 or self.smoothing < 0:
            raise ValidationError("transition velocity must be positive, smoothing >= 0")

    @property
    def mu_max(self):
        return max(self.static_friction, self.dynamic_friction) + self.viscous_friction


def spheres_from_model(model: BiomechModel, overrides: dict | None = None) -> list[ContactSphere]:
    """Contact spheres declared in the model file, with optional parameter overrides."""
    params = dict(model.contact_defaults)
    params.update(overrides or {})
    out = []
    for sp in model.contact_spheres:
        kw = dict(params)
        kw.update({k: v for k, v in sp.items() if k not in ("side", "segment", "position")})
        out.append(ContactSphere(sp["side"], model.segment_index(sp["segment"]),
                                 sp["position"], **kw))
    for side in SIDES:
        n = sum(s.side == side for s in out)
        if n != SPHERES_PER_FOOT:
            raise StructureError(f"foot {side!r} has {n} contact spheres, "
                                 f"expected {SPHERES_PER_FOOT}")
    return out


def _softplus(x):
    return np.logaddexp(0.0, x)


def effective_depth(delta, sphere: ContactSphere):
    """Smoothed penetration; exact ``max(delta, 0)`` when smoothing is 0."""
    w = sphere.smoothing * sphere.radius
    if w == 0:
        return np.maximum(delta, 0.0)
    return w * _softplus(np.asarray(delta, dtype=float) / w)


def normal_force(delta, delta_dot, sphere: ContactSphere):
    d = effective_depth(delta, sphere)
    f = sphere.stiffness * d ** 1.5 * (1.0 + 1.5 * sphere.dissipation * delta_dot)
    return np.maximum(f, 0.0)


def friction_coefficient(speed, sphere: ContactSphere):
    """Stribeck-like curve rising from 0 through tanh, plus a bounded viscous part."""
    x = np.asarray(speed, dtype=float) / sphere.transition_velocity
    mu_s, mu_d = sphere.static_friction, sphere.dynamic_friction
    return (mu_d + (mu_s - mu_d) / np.cosh(x)) * np.tanh(x) + sphere.viscous_friction * x / (1 + x)


def _mu_over_speed(speed, sphere):
    # mu(s)/s with its finite limit at s = 0
    vt = sphere.transition_velocity
    if speed < 1e-12 * vt:
        return (sphere.static_friction + sphere.viscous_friction) / vt
    return friction_coefficient(speed, sphere) / speed


def sphere_force(delta, delta_dot, tangential_velocity, sphere: ContactSphere) -> np.ndarray:
    """Force (Fx, Fy, Fz) on the foot; y is the floor normal.

    ``delta`` is the penetration depth (positive into the floor), ``delta_dot``
    its rate and ``tangential_velocity`` the (vx, vz) slip of the contact point.
    """
    vt = np.asarray(tangential_velocity, dtype=float).reshape(2)
    fn = float(normal_force(delta, delta_dot, sphere))
    speed = float(np.hypot(vt[0], vt[1]))
    ft = -_mu_over_speed(speed, sphere) * fn * vt
    return np.array([ft[0], fn, ft[1]])


@dataclass
class GrfFrame:
    time: float
    force: dict = field(default_factory=dict)  # side -> (3,) N
    cop: dict = field(default_factory=dict)  # side -> (3,) m or None
    free_moment: dict = field(default_factory=dict)  # side -> N m about vertical


def _sphere_kinematics(model, q_traj, spheres, floor_height, frame_rate):
    """Penetration, its rate and tangential slip of each sphere's lowest material point."""
    n = len(q_traj)
    rots = np.empty((n, len(spheres), 3, 3))
    centers = np.empty((n, len(spheres), 3))
    for f, q in enumerate(q_traj):
        r, o = model.segment_frames(model.check_range(q))
        for i, sp in enumerate(spheres):
            rots[f, i] = r[sp.segment]
            centers[f, i] = o[sp.segment] + r[sp.segment] @ (model.scales[sp.segment] * sp.position)
    radius = np.array([sp.radius for sp in spheres])
    delta = floor_height - (centers[..., 1] - radius)
    contact = centers - radius[None, :, None] * UP
    # velocity of the material point currently lowest: follow it to the neighbours
    vel = np.empty_like(centers)
    for f in range(n):
        a, b = max(f - 1, 0), min(f + 1, n - 1)
        local = np.einsum("sji,sj->si", rots[f], contact[f] - centers[f])
        pa = centers[a] + np.einsum("sij,sj->si", rots[a], local)
        pb = centers[b] + np.einsum("sij,sj->si", rots[b], local)
        vel[f] = (pb - pa) * frame_rate / (b - a)
    return delta, -vel[..., 1], vel[..., [0, 2]], contact


def grf_sequence(model: BiomechModel, q_traj, floor_height: float, frame_rate: float,
                 spheres: list[ContactSphere] | None = None, t0: float = 0.0) -> list[GrfFrame]:
    """Per-frame, per-foot resultant force, centre of pressure and free moment."""
    q_traj = np.asarray(q_traj, dtype=float)
    if q_traj.ndim != 2 or q_traj.shape[1] != len(model.coordinate_names):
        raise ShapeMismatchError("coordinates must be (frames, 33)")
    if len(q_traj) < 2:
        raise ValidationError("GRF evaluation needs at least 2 frames")
    spheres = spheres_from_model(model) if spheres is None else spheres
    delta, ddot, vt, contact = _sphere_kinematics(model, q_traj, spheres, floor_height,
                                                  frame_rate)
    frames = []
    for f in range(len(q_traj)):
        gf = GrfFrame(t0 + f / frame_rate)
        for side in SIDES:
            total = np.zeros(3)
            moment_y = 0.0
            weighted = np.zeros(3)
            for i, sp in enumerate(spheres):
                if sp.side != side:
                    continue
                fi = sphere_force(delta[f, i], ddot[f, i], vt[f, i], sp)
                p = contact[f, i].copy()
                p[1] = floor_height
                total += fi
                weighted += fi[1] * p
                moment_y += p[2] * fi[0] - p[0] * fi[2]
            gf.force[side] = total
            if total[1] > COP_MIN_FORCE:
                cop = weighted / total[1]
                gf.cop[side] = cop
                # moment about the vertical through the CoP
                gf.free_moment[side] = moment_y - (cop[2] * total[0] - cop[0] * total[2])
            else:
                gf.cop[side] = None
                gf.free_moment[side] = 0.0
        frames.append(gf)
    return frames


def vertical_forces(grf: list[GrfFrame]) -> dict:
    return {s: np.array([g.force[s][1] for g in grf]) for s in SIDES}


def force_array(grf: list[GrfFrame]) -> np.ndarray:
    """(F, 2, 3) forces, sides ordered right then left."""
    return np.array([[g.force[s] for s in SIDES] for g in grf])


def _spans(mask):
    spans = []
    start = None
    for i, m in enumerate(mask):
        if m and start is None:
            start = i
        elif not m and start is not None:
            spans.append((start, i - 1))
            start = None
    if start is not None:
        spans.append((start, len(mask) - 1))
    return spans


def detect_stance(grf: list[GrfFrame], threshold: float = DEFAULT_STANCE_THRESHOLD) -> dict:
    """Maximal frame spans (inclusive) with vertical force at or above ``threshold``."""
    fy = vertical_forces(grf) if grf else {s: np.zeros(0) for s in SIDES}
    return {s: _spans(fy[s] >= threshold) for s in SIDES}


def floor_from_spheres(model: BiomechModel, q_traj, spheres: list[ContactSphere] | None = None,
                       percentile: float = 5.0) -> float:
    """Floor height guessed from kinematics alone: a low percentile of the lowest sphere bottom."""
    spheres = spheres_from_model(model) if spheres is None else spheres
    radius = np.array([sp.radius for sp in spheres])
    lows = []
    for q in np.asarray(q_traj, dtype=float):
        r, o = model.segment_frames(q)
        c = np.array([o[sp.segment] + r[sp.segment] @ (model.scales[sp.segment] * sp.position)
                      for sp in spheres])
        lows.append(np.min(c[:, 1] - radius))
    return float(np.percentile(lows, percentile))
