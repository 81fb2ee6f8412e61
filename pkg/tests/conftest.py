import numpy as np
import pytest

from almtrack import CameraIntrinsics, SimScene, Trajectory, Transform, square_marker
from almtrack.geometry import so3_exp

# Collected by the acceptance tests; printed as one block after the run so
# every criterion shows a single PASS/FAIL line regardless of capture mode.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture
def acceptance_report():
    def report(number, name, passed, detail=""):
        verdict = "PASS" if passed else "FAIL"
        line = f"ACCEPTANCE {number} ({name}): {verdict}"
        if detail:
            line += f" [{detail}]"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return line

    return report


@pytest.fixture
def intrinsics():
    return CameraIntrinsics(fx=1200.0, fy=1200.0, cx=320.0, cy=240.0,
                            width=640, height=480)


@pytest.fixture
def marker9():
    # 9 cm, 8 LEDs: square corners plus edge midpoints
    return square_marker("alm0", side_m=0.09)


def static_scene(intrinsics, marker, pose, duration_us=1500, **kwargs):
    traj = Trajectory.constant(pose)
    return SimScene(intrinsics=intrinsics, markers=((marker, traj),),
                    duration_us=duration_us, **kwargs)


def tilted_pose(z_m, tilt_deg=10.0, axis=(0.0, 1.0, 0.0), xy=(0.0, 0.0)):
    w = np.deg2rad(tilt_deg) * np.asarray(axis, dtype=float)
    return Transform(so3_exp(w), [xy[0], xy[1], z_m])
