import numpy as np
import pytest

from monokin import model as body
from monokin.biomech import BiomechModel
from monokin.camera import CameraExtrinsics, CameraIntrinsics


@pytest.fixture(scope="session")
def template():
    return body.default_template()


@pytest.fixture(scope="session")
def generic():
    return BiomechModel.load()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def intrinsics():
    return CameraIntrinsics(1500.0, 1500.0, 540.0, 960.0, 1080, 1920)


@pytest.fixture(scope="session")
def front_camera():
    return CameraExtrinsics.look_at(eye=(3.0, 1.2, 0.5), target=(0.0, 0.9, 0.0))


def random_pose_frame(template, rng, scale=0.3):
    from monokin.model import PoseFrame
    return PoseFrame(rng.normal(0, scale, (template.n_joints, 3)), rng.normal(0, 0.5, 3),
                     rng.normal(0, 0.5, 3))


def random_sequence(template, rng, n_frames=6, scale=0.2, frame_rate=30.0):
    from monokin.model import PoseSequence
    return PoseSequence(rng.normal(0, scale, (n_frames, template.n_joints, 3)),
                        rng.normal(0, 0.1, (n_frames, 3)) + [0, 0.0, 0],
                        rng.normal(0, scale, (n_frames, 3)), frame_rate)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE = {}


def record_criterion(number, title, ok, detail):
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
