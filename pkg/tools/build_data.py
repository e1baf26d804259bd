"""Regenerate the JSON data files shipped in ``src/monokin/data``.

The skeleton template and the generic biomechanical model share one segment
geometry so that a zero-shape body and the unscaled model describe the same
skeleton. Run from the repo root::

    python3 tools/build_data.py
"""

import json
from pathlib import Path

import numpy as np

DATA = Path(__file__).resolve().parents[1] / "src" / "monokin" / "data"
D = 10


def mirror_point(p):
    return [p[0], p[1], -p[2]]


def mirror_axis(a):
    # axial vector under reflection z -> -z
    return [-a[0], -a[1], a[2]]


# name, parent, offset (right side; left mirrored)
BODY = [
    ("pelvis", None, [0.0, 0.93, 0.0]),
    ("torso", "pelvis", [-0.03, 0.09, 0.0]),
    ("head", "torso", [0.0, 0.43, 0.0]),
    ("r_humerus", "torso", [-0.01, 0.38, 0.17]),
    ("r_forearm", "r_humerus", [0.0, -0.29, 0.0]),
    ("l_humerus", "torso", [-0.01, 0.38, -0.17]),
    ("l_forearm", "l_humerus", [0.0, -0.29, 0.0]),
    ("r_femur", "pelvis", [-0.05, -0.07, 0.085]),
    ("r_tibia", "r_femur", [0.0, -0.41, 0.0]),
    ("r_foot", "r_tibia", [0.0, -0.40, 0.0]),
    ("r_toes", "r_foot", [0.15, -0.03, 0.0]),
    ("l_femur", "pelvis", [-0.05, -0.07, -0.085]),
    ("l_tibia", "l_femur", [0.0, -0.41, 0.0]),
    ("l_foot", "l_tibia", [0.0, -0.40, 0.0]),
    ("l_toes", "l_foot", [0.15, -0.03, 0.0]),
]
SEG_INDEX = {name: i for i, (name, _, _) in enumerate(BODY)}


def shape_basis():
    """Per-segment D x 3 offset deltas."""
    basis = {name: np.zeros((D, 3)) for name, _, _ in BODY}
    for name, _, off in BODY:
        basis[name][0] = 0.06 * np.asarray(off)  # stature: uniform scale
    for side in "rl":
        sgn = 1.0 if side == "r" else -1.0
        # leg length, pelvis raised to keep soles on the floor
        basis[f"{side}_tibia"][1] = [0.0, -0.02, 0.0]
        basis[f"{side}_foot"][1] = [0.0, -0.02, 0.0]
        # torso length carries the shoulders up
        basis[f"{side}_humerus"][2] = [0.0, 0.02, 0.0]
        basis[f"{side}_humerus"][3] = [0.0, 0.0, 0.015 * sgn]
        basis[f"{side}_femur"][4] = [0.0, 0.0, 0.01 * sgn]
        basis[f"{side}_forearm"][5] = [0.0, -0.015, 0.0]
        # thigh/shank ratio at constant leg length
        basis[f"{side}_tibia"][6] = [0.0, -0.015, 0.0]
        basis[f"{side}_foot"][6] = [0.0, 0.015, 0.0]
        basis[f"{side}_femur"][7] = [-0.01, 0.0, 0.0]
        basis[f"{side}_toes"][9] = [0.015, 0.0, 0.0]
    basis["pelvis"][1] = [0.0, 0.04, 0.0]
    basis["torso"][2] = [0.0, 0.01, 0.0]
    basis["head"][2] = [0.0, 0.02, 0.0]
    basis["torso"][7] = [0.01, 0.0, 0.0]
    basis["head"][8] = [0.0, 0.015, 0.0]
    return basis


KEYPOINTS = [
    ("head_top", "head", [0.02, 0.25, 0.0]),
    ("nose", "head", [0.10, 0.10, 0.0]),
    ("neck", "head", [0.0, 0.0, 0.0]),
    ("r_shoulder", "r_humerus", [0.0, 0.0, 0.0]),
    ("r_elbow", "r_forearm", [0.0, 0.0, 0.0]),
    ("r_wrist", "r_forearm", [0.0, -0.25, 0.0]),
    ("l_shoulder", "l_humerus", [0.0, 0.0, 0.0]),
    ("l_elbow", "l_forearm", [0.0, 0.0, 0.0]),
    ("l_wrist", "l_forearm", [0.0, -0.25, 0.0]),
    ("r_hip", "r_femur", [0.0, 0.0, 0.0]),
    ("r_knee", "r_tibia", [0.0, 0.0, 0.0]),
    ("r_ankle", "r_foot", [0.0, 0.0, 0.0]),
    ("r_heel", "r_foot", [-0.05, -0.05, 0.0]),
    ("r_toe", "r_toes", [0.05, -0.02, 0.0]),
    ("l_hip", "l_femur", [0.0, 0.0, 0.0]),
    ("l_knee", "l_tibia", [0.0, 0.0, 0.0]),
    ("l_ankle", "l_foot", [0.0, 0.0, 0.0]),
    ("l_heel", "l_foot", [-0.05, -0.05, 0.0]),
    ("l_toe", "l_toes", [0.05, -0.02, 0.0]),
]

# (name, segment, offset) right side; "L" variants mirrored
MARKERS_CENTRAL = [
    ("RASI", "pelvis", [0.03, 0.02, 0.12]),
    ("LASI", "pelvis", [0.03, 0.02, -0.12]),
    ("RPSI", "pelvis", [-0.15, 0.03, 0.05]),
    ("LPSI", "pelvis", [-0.15, 0.03, -0.05]),
    ("C7", "torso", [-0.08, 0.43, 0.0]),
    ("CLAV", "torso", [0.07, 0.37, 0.0]),
    ("RSHO", "torso", [-0.01, 0.41, 0.19]),
    ("LSHO", "torso", [-0.01, 0.41, -0.19]),
]
MARKERS_SIDED = [
    ("UA", "humerus", [0.0, -0.15, 0.05]),
    ("ELB", "humerus", [0.0, -0.29, 0.045]),
    ("MELB", "humerus", [0.0, -0.29, -0.045]),
    ("WRA", "forearm", [0.0, -0.25, 0.035]),
    ("WRB", "forearm", [0.0, -0.25, -0.035]),
    ("THI", "femur", [0.03, -0.20, 0.07]),
    ("KNE", "femur", [0.0, -0.41, 0.05]),
    ("MKNE", "femur", [0.0, -0.41, -0.05]),
    ("TIB", "tibia", [0.03, -0.20, 0.055]),
    ("ANK", "tibia", [0.0, -0.40, 0.04]),
    ("MANK", "tibia", [0.0, -0.40, -0.04]),
    ("HEE", "foot", [-0.06, -0.02, 0.0]),
    ("5MET", "foot", [0.13, -0.03, 0.045]),
    ("1MET", "foot", [0.13, -0.03, -0.045]),
    ("TOE", "toes", [0.06, -0.01, 0.0]),
]


def markers():
    out = [(n, s, o) for n, s, o in MARKERS_CENTRAL]
    for side in "RL":
        for n, s, o in MARKERS_SIDED:
            seg = f"{side.lower()}_{s}"
            out.append((side + n, seg, o if side == "R" else mirror_point(o)))
    assert len(out) == 38
    return out


def build_template():
    basis = shape_basis()
    segments = []
    for name, parent, off in BODY:
        segments.append({
            "name": name,
            "parent": None if parent is None else SEG_INDEX[parent],
            "offset": off,
            "shape_basis": basis[name].round(6).tolist(),
        })
    anchor_scale = [0.0] * D
    anchor_scale[0] = 0.06
    return {
        "format_version": 1,
        "name": "monokin-default-skeleton",
        "notes": "Parametric skeleton with linear shape blend on segment offsets. "
                 "Marker placements are anatomically motivated but non-canonical.",
        "shape_dim": D,
        "segments": segments,
        "anchor_shape_scale": anchor_scale,
        "keypoint_anchors": [
            {"name": n, "segment": SEG_INDEX[s], "offset": o} for n, s, o in KEYPOINTS
        ],
        "marker_anchors": [
            {"name": n, "segment": SEG_INDEX[s], "offset": o} for n, s, o in markers()
        ],
        "stature": {"top": "head_top", "base": ["r_heel", "l_heel"]},
        "contact_keypoints": {
            "l_heel": "l_heel", "r_heel": "r_heel", "l_toe": "l_toe", "r_toe": "r_toe",
        },
        "standing_pose": {
            "joint_rotations": [[0.0, 0.0, 0.0]] * (len(BODY) - 1),
            "root_translation": [0.0, 0.0, 0.0],
            "root_orientation": [0.0, 0.0, 0.0],
        },
    }


def deg(*v):
    return [float(np.deg2rad(x)) for x in v]


def build_biomech():
    segs = []
    for name, parent, off in BODY:
        if name == "head":
            continue
        segs.append({
            "name": name,
            "parent": parent,
            "offset": [0.0, 0.0, 0.0] if parent is None else off,
        })

    coords = []
    joints = {}

    def coord(name, seg, kind, axis, lo, hi):
        rng = [lo, hi] if kind == "translation" else deg(lo, hi)
        coords.append({"name": name, "type": kind, "range": rng})
        joints.setdefault(seg, []).append(
            {"type": kind, "axis": axis, "coordinate": name})

    coord("pelvis_tx", "pelvis", "translation", [1, 0, 0], -10.0, 10.0)
    coord("pelvis_ty", "pelvis", "translation", [0, 1, 0], -1.0, 3.0)
    coord("pelvis_tz", "pelvis", "translation", [0, 0, 1], -10.0, 10.0)
    coord("pelvis_tilt", "pelvis", "rotation", [0, 0, 1], -90, 90)
    coord("pelvis_list", "pelvis", "rotation", [1, 0, 0], -60, 60)
    coord("pelvis_rotation", "pelvis", "rotation", [0, 1, 0], -180, 180)
    coord("lumbar_extension", "torso", "rotation", [0, 0, 1], -70, 30)
    coord("lumbar_bending", "torso", "rotation", [1, 0, 0], -30, 30)
    coord("lumbar_rotation", "torso", "rotation", [0, 1, 0], -30, 30)

    knee_knots = deg(0, 20, 40, 60, 80, 100, 120)
    knee_add = deg(0.0, 1.0, 2.0, 2.5, 2.8, 3.0, 3.0)
    knee_rot = deg(0.0, 4.0, 8.0, 11.0, 13.0, 14.0, 15.0)

    for s in "rl":
        m = (lambda a: a) if s == "r" else mirror_axis
        coord(f"hip_flexion_{s}", f"{s}_femur", "rotation", [0, 0, 1], -30, 120)
        coord(f"hip_adduction_{s}", f"{s}_femur", "rotation", m([1, 0, 0]), -50, 30)
        coord(f"hip_rotation_{s}", f"{s}_femur", "rotation", m([0, 1, 0]), -40, 40)
        coord(f"knee_angle_{s}", f"{s}_tibia", "rotation", [0, 0, -1], 0, 120)
        for axis, vals, label in ((m([1, 0, 0]), knee_add, "adduction"),
                                  (m([0, 1, 0]), knee_rot, "rotation")):
            joints[f"{s}_tibia"].append({
                "type": "rotation", "axis": axis, "coupled": f"knee_{label}_{s}",
                "driver": f"knee_angle_{s}",
                "spline": {"knots": knee_knots, "values": vals},
            })
        coord(f"ankle_angle_{s}", f"{s}_foot", "rotation", [0, 0, 1], -40, 30)
        sub = list(np.round(np.array([0.787, 0.605, -0.120]) / np.linalg.norm([0.787, 0.605, -0.120]), 6))
        coord(f"subtalar_angle_{s}", f"{s}_foot", "rotation", m([float(v) for v in sub]), -20, 20)
        coord(f"mtp_angle_{s}", f"{s}_toes", "rotation", [0, 0, 1], -30, 30)
        coord(f"arm_flex_{s}", f"{s}_humerus", "rotation", [0, 0, 1], -90, 90)
        coord(f"arm_add_{s}", f"{s}_humerus", "rotation", m([1, 0, 0]), -75, 30)
        coord(f"arm_rot_{s}", f"{s}_humerus", "rotation", m([0, 1, 0]), -90, 90)
        coord(f"elbow_flex_{s}", f"{s}_forearm", "rotation", [0, 0, 1], 0, 150)
        coord(f"pro_sup_{s}", f"{s}_forearm", "rotation", m([0, 1, 0]), -80, 80)

    for seg in segs:
        seg["joint"] = joints.get(seg["name"], [])

    # coordinate order: pelvis 6, lumbar 3, then legs, then arms
    order = ["pelvis_tx", "pelvis_ty", "pelvis_tz", "pelvis_tilt", "pelvis_list",
             "pelvis_rotation", "lumbar_extension", "lumbar_bending", "lumbar_rotation"]
    for s in "rl":
        order += [f"hip_flexion_{s}", f"hip_adduction_{s}", f"hip_rotation_{s}",
                  f"knee_angle_{s}", f"ankle_angle_{s}", f"subtalar_angle_{s}",
                  f"mtp_angle_{s}"]
    for s in "rl":
        order += [f"arm_flex_{s}", f"arm_add_{s}", f"arm_rot_{s}",
                  f"elbow_flex_{s}", f"pro_sup_{s}"]
    by_name = {c["name"]: c for c in coords}
    coords = [by_name[n] for n in order]
    assert len(coords) == 33

    pairs = {"pelvis": [["RASI", "LASI"], ["RASI", "RPSI"], ["LASI", "LPSI"]],
             "torso": [["C7", "CLAV"], ["RSHO", "LSHO"]]}
    for s, S in (("r", "R"), ("l", "L")):
        pairs[f"{s}_humerus"] = [[f"{S}UA", f"{S}ELB"], [f"{S}ELB", f"{S}MELB"]]
        pairs[f"{s}_forearm"] = [[f"{S}WRA", f"{S}WRB"]]
        pairs[f"{s}_femur"] = [[f"{S}THI", f"{S}KNE"], [f"{S}KNE", f"{S}MKNE"]]
        pairs[f"{s}_tibia"] = [[f"{S}TIB", f"{S}ANK"], [f"{S}ANK", f"{S}MANK"]]
        pairs[f"{s}_foot"] = [[f"{S}HEE", f"{S}5MET"], [f"{S}5MET", f"{S}1MET"]]

    spheres = []
    for s in "rl":
        mp = (lambda p: p) if s == "r" else mirror_point
        foot_y = -0.05 + 0.032 - 0.0015
        toe_y = -0.02 + 0.032 - 0.0015
        for seg, p in (
            ("foot", [-0.03, foot_y, 0.02]), ("foot", [-0.03, foot_y, -0.02]),
            ("foot", [0.09, foot_y, 0.035]), ("foot", [0.09, foot_y, -0.035]),
            ("toes", [0.03, toe_y, 0.02]), ("toes", [0.03, toe_y, -0.02]),
        ):
            spheres.append({"side": s, "segment": f"{s}_{seg}",
                            "position": [round(v, 6) for v in mp(p)]})

    return {
        "format_version": 1,
        "name": "monokin-33dof",
        "notes": "Kinematic skeleton with 33 independent coordinates. Knee coupling "
                 "splines and contact sphere placement are non-canonical defaults.",
        "segments": segs,
        "coordinates": coords,
        "markers": [{"name": n, "segment": s, "offset": o} for n, s, o in markers()],
        "scaling_pairs": pairs,
        "scale_like": {"r_toes": "r_foot", "l_toes": "l_foot"},
        "contact_spheres": spheres,
        "contact_defaults": {
            "radius": 0.032, "stiffness": 1.0e6, "dissipation": 2.0,
            "static_friction": 0.8, "dynamic_friction": 0.8, "viscous_friction": 0.5,
            "transition_velocity": 0.2, "smoothing": 0.03125,
        },
    }


def build_presets():
    return {
        "format_version": 1,
        "defaults": {"w_h": 1.0e8, "w_beta": 1.0e4, "w_c": 1.0e6},
        "presets": {
            "walking": {"filter_cutoff_hz": 6.0, "w_r": 50.0, "w_v": 1.0, "w_s": 100.0,
                        "w_sm": 10.0, "w_f": 100.0},
            "squats": {"filter_cutoff_hz": 4.0, "w_r": 50.0, "w_v": 1.0, "w_s": 100.0,
                       "w_sm": 10.0, "w_f": 10.0},
            "sts": {"filter_cutoff_hz": 4.0, "w_r": 250.0, "w_v": 1.0, "w_s": 100.0,
                    "w_sm": 10.0, "w_f": 50.0},
            "other": {"filter_cutoff_hz": 8.0, "w_r": 50.0, "w_v": 1.0, "w_s": 100.0,
                      "w_sm": 10.0, "w_f": None},
        },
    }


def build_intrinsics():
    # Representative values, not vendor calibration data.
    recs = []
    for device, f in (("iPhone12,1", 1580.0), ("iPhone13,2", 1600.0),
                      ("iPhone14,5", 1610.0), ("iPhone15,2", 1650.0),
                      ("iPad13,1", 1520.0)):
        recs.append({"device": device, "width": 1080, "height": 1920,
                     "fx": f, "fy": f, "cx": 540.0, "cy": 960.0})
        recs.append({"device": device, "width": 720, "height": 1280,
                     "fx": round(f * 2 / 3, 3), "fy": round(f * 2 / 3, 3),
                     "cx": 360.0, "cy": 640.0})
    return recs


def build_scenarios():
    base = {"format_version": 1, "frame_rate": 30.0, "subject_height": 1.75,
            "mass_kg": 70.0, "device": "iPhone13,2", "resolution": [1080, 1920],
            "camera": {"azimuth_deg": 45.0, "distance": 3.0, "height": 1.2},
            "seed": 0}
    walking = dict(base, activity="walking", cycles=2,
                   corruption={"drift": 0.3, "drift_direction": None,
                               "keypoint_noise_px": 2.0, "penetration": 0.02,
                               "slide": 0.05, "contact_noise": 0.05})
    sts = dict(base, activity="sts", cycles=5,
               corruption={"drift": 0.5, "drift_direction": None,
                           "keypoint_noise_px": 0.0, "penetration": 0.0,
                           "slide": 0.0, "contact_noise": 0.0})
    squats = dict(base, activity="squats", cycles=5,
                  corruption={"drift": 0.2, "drift_direction": None,
                              "keypoint_noise_px": 1.0, "penetration": 0.01,
                              "slide": 0.0, "contact_noise": 0.05})
    return {"walking": walking, "sts": sts, "squats": squats}


def dump(obj, path):
    path.write_text(json.dumps(obj, indent=1) + "\n")


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    dump(build_template(), DATA / "skeleton_template.json")
    dump(build_biomech(), DATA / "biomech_model.json")
    dump(build_presets(), DATA / "presets.json")
    dump(build_intrinsics(), DATA / "intrinsics.json")
    (DATA / "scenarios").mkdir(exist_ok=True)
    for name, sc in build_scenarios().items():
        dump(sc, DATA / "scenarios" / f"{name}.json")


if __name__ == "__main__":
    main()
