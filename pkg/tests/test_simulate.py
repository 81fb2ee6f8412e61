import numpy as np
import pytest

from almtrack import (
    AlmConfig,
    CameraIntrinsics,
    LedSpec,
    SimScene,
    Trajectory,
    Transform,
    simulate,
    square_marker,
)
from almtrack.geometry import project, rotation_angle_deg, so3_exp, so3_log
from almtrack.simulate import (
    add_noise_events,
    load_scene,
    save_scene,
    scene_from_dict,
    scene_to_dict,
    simulate_blink_events,
    synth_ground_truth,
)

from conftest import static_scene


def disc_oracle(cu, cv, radius):
    """Reference blob: integer pixels within `radius` of the continuous
    center, plus the rounded center itself."""
    pixels = set()
    r_int = int(np.ceil(radius)) + 1
    for u in range(int(np.floor(cu)) - r_int, int(np.ceil(cu)) + r_int + 1):
        for v in range(int(np.floor(cv)) - r_int, int(np.ceil(cv)) + r_int + 1):
            if (u - cu) ** 2 + (v - cv) ** 2 <= radius**2:
                pixels.add((u, v))
    pixels.add((int(round(cu)), int(round(cv))))
    return pixels


def four_led_marker(name="m", half=0.05):
    leds = (
        LedSpec(0, (-half, -half, 0.0), 1e6 / 40),
        LedSpec(1, (half, -half, 0.0), 1e6 / 50),
        LedSpec(2, (half, half, 0.0), 1e6 / 64),
        LedSpec(3, (-half, half, 0.0), 1e6 / 80),
    )
    return AlmConfig(name, leds)


def test_single_blink_matches_disc_oracle(intrinsics):
    # fractional projection centers exercise the lattice clipping
    marker = four_led_marker()
    pose = Transform(np.eye(3), [0.0123, -0.0077, 2.0])
    scene = static_scene(intrinsics, marker, pose, duration_us=1,
                         blob_radius_px=2.4)
    stream = simulate_blink_events(scene)
    assert np.all(stream["t"] == 0)

    centers = project(intrinsics, pose.apply(marker.positions()))
    for (cu, cv) in centers:
        want = disc_oracle(cu, cv, 2.4)
        near = stream[(np.abs(stream["u"] - cu) < 8) & (np.abs(stream["v"] - cv) < 8)]
        got = set(zip(near["u"].tolist(), near["v"].tolist()))
        assert got == want


def test_integer_centered_blob_covers_29_pixels(intrinsics):
    # radius 3 and an exactly integer projection: 29-pixel disc per blink
    marker = four_led_marker(half=0.05)  # corners land 30 px off center
    pose = Transform(np.eye(3), [0.0, 0.0, 2.0])
    scene = static_scene(intrinsics, marker, pose, duration_us=1,
                         blob_radius_px=3.0)
    stream = simulate_blink_events(scene)
    centers = project(intrinsics, pose.apply(marker.positions()))
    for (cu, cv) in centers:
        assert float(cu).is_integer() and float(cv).is_integer()
        near = stream[(np.abs(stream["u"] - cu) <= 3) & (np.abs(stream["v"] - cv) <= 3)]
        assert near.shape[0] == 29


def test_degenerate_radius_emits_single_pixel(intrinsics):
    marker = four_led_marker()
    pose = Transform(np.eye(3), [0.013, 0.007, 2.0])
    scene = static_scene(intrinsics, marker, pose, duration_us=1,
                         blob_radius_px=0.5)
    stream = simulate_blink_events(scene)
    centers = project(intrinsics, pose.apply(marker.positions()))
    # rounded center always fires even when no lattice point is inside r
    assert stream.shape[0] == len(centers)
    got = set(zip(stream["u"].tolist(), stream["v"].tolist()))
    want = {(int(round(cu)), int(round(cv))) for cu, cv in centers}
    assert got == want


def test_blink_count_and_timestamps(intrinsics):
    marker = four_led_marker()
    pose = Transform(np.eye(3), [0.0, 0.0, 2.0])
    scene = static_scene(intrinsics, marker, pose, duration_us=400)
    stream = simulate_blink_events(scene)
    # LED 0 blinks every 40 us from phase 0: exactly 10 blinks in [0, 400)
    c0 = project(intrinsics, pose.apply(marker.positions()))[0]
    near = stream[(np.abs(stream["u"] - c0[0]) <= 2) & (np.abs(stream["v"] - c0[1]) <= 2)]
    np.testing.assert_array_equal(np.unique(near["t"]), np.arange(0, 400, 40))


def test_refractory_suppresses_alternate_blinks(intrinsics):
    marker = four_led_marker()
    pose = Transform(np.eye(3), [0.0, 0.0, 2.0])
    centers = project(intrinsics, pose.apply(marker.positions()))
    cu, cv = int(round(centers[0][0])), int(round(centers[0][1]))

    free = static_scene(intrinsics, marker, pose, duration_us=400)
    dead = static_scene(intrinsics, marker, pose, duration_us=400, refractory_us=40)
    at_pix = lambda s: s[(s["u"] == cu) & (s["v"] == cv)]
    np.testing.assert_array_equal(at_pix(simulate_blink_events(free))["t"],
                                  np.arange(0, 400, 40))
    # dt == refractory suppresses, so a 40 us dead time halves a 40 us blinker
    np.testing.assert_array_equal(at_pix(simulate_blink_events(dead))["t"],
                                  np.arange(0, 400, 80))


def test_simulate_deterministic_bitwise(intrinsics, marker9):
    pose = Transform(so3_exp([0.0, 0.2, 0.0]), [0.0, 0.05, 1.5])
    scene = static_scene(intrinsics, marker9, pose, duration_us=2000,
                         center_jitter_px=0.3, noise_rate=0.05, rng_seed=3)
    a = simulate(scene)
    b = simulate(scene)
    assert a.shape[0] > 0
    np.testing.assert_array_equal(a, b)


def test_jitter_seed_controls_stream(intrinsics, marker9):
    pose = Transform(np.eye(3), [0.0, 0.0, 1.5])
    s1 = static_scene(intrinsics, marker9, pose, duration_us=1000,
                      center_jitter_px=0.5, rng_seed=1)
    s2 = static_scene(intrinsics, marker9, pose, duration_us=1000,
                      center_jitter_px=0.5, rng_seed=2)
    a, b = simulate(s1), simulate(s2)
    assert a.shape != b.shape or not np.array_equal(a, b)


def test_noise_on_empty_scene(intrinsics):
    scene = SimScene(intrinsics=intrinsics, markers=(), duration_us=100_000,
                     noise_rate=0.5, rng_seed=7)
    stream = simulate(scene)
    lam = 0.5 * 0.1 * intrinsics.width * intrinsics.height  # expected count
    assert abs(stream.shape[0] - lam) < 6.0 * np.sqrt(lam)
    assert np.all(np.diff(stream["t"]) >= 0)
    assert np.all((stream["u"] >= 0) & (stream["u"] < intrinsics.width))
    assert np.all((stream["v"] >= 0) & (stream["v"] < intrinsics.height))
    assert np.all((stream["t"] >= 0) & (stream["t"] < 100_000))


def test_noise_rate_zero_is_identity(intrinsics, marker9):
    pose = Transform(np.eye(3), [0.0, 0.0, 1.5])
    scene = static_scene(intrinsics, marker9, pose, duration_us=500)
    stream = simulate_blink_events(scene)
    assert add_noise_events(stream, scene) is stream


def test_trajectory_geodesic_interpolation():
    p0 = Transform(so3_exp([0.0, 0.0, 0.0]), [0.0, 0.0, 1.0])
    p1 = Transform(so3_exp([0.0, np.deg2rad(40.0), 0.0]), [1.0, 0.0, 2.0])
    traj = Trajectory([(0, p0), (1000, p1)])
    mid = traj.at(500)
    np.testing.assert_allclose(mid.displacement, [0.5, 0.0, 1.5], atol=1e-12)
    np.testing.assert_allclose(rotation_angle_deg(p0.rotation.T @ mid.rotation),
                               20.0, atol=1e-9)
    np.testing.assert_allclose(rotation_angle_deg(mid.rotation.T @ p1.rotation),
                               20.0, atol=1e-9)
    # clamps outside keyframe range
    np.testing.assert_allclose(traj.at(-50).as_flat(), p0.as_flat(), atol=1e-12)
    np.testing.assert_allclose(traj.at(5000).as_flat(), p1.as_flat(), atol=1e-12)
    assert not traj.is_static
    assert Trajectory.constant(p0).is_static


def test_synth_ground_truth_samples(intrinsics, marker9):
    p0 = Transform(np.eye(3), [0.0, 0.0, 1.0])
    p1 = Transform(np.eye(3), [0.2, 0.0, 1.0])
    traj = Trajectory([(0, p0), (10_000, p1)])
    scene = SimScene(intrinsics=intrinsics, markers=((marker9, traj),),
                     duration_us=10_000)
    gt = synth_ground_truth(scene, sample_period_us=2_500)
    assert set(gt) == {"alm0"}
    ts = [t for t, _ in gt["alm0"]]
    assert ts == sorted(ts) and ts[0] == 0
    for t, pose in gt["alm0"]:
        np.testing.assert_allclose(pose.as_flat(), traj.at(t).as_flat(), atol=1e-12)


def test_scene_yaml_round_trip(tmp_path, intrinsics, marker9):
    pose = Transform(so3_exp([0.1, 0.2, 0.3]), [0.0, 0.1, 1.5])
    scene = static_scene(intrinsics, marker9, pose, duration_us=5000,
                         blob_radius_px=2.5, refractory_us=10, noise_rate=0.01,
                         center_jitter_px=0.2, rng_seed=42)
    back = scene_from_dict(scene_to_dict(scene))
    path = tmp_path / "scene.yaml"
    save_scene(path, scene)
    loaded = load_scene(path)
    for other in (back, loaded):
        assert other.duration_us == scene.duration_us
        assert other.blob_radius_px == scene.blob_radius_px
        assert other.refractory_us == scene.refractory_us
        assert other.noise_rate == scene.noise_rate
        assert other.center_jitter_px == scene.center_jitter_px
        assert other.rng_seed == scene.rng_seed
        assert other.intrinsics == scene.intrinsics
        np.testing.assert_array_equal(simulate(other), simulate(scene))


def test_scene_validation():
    k = CameraIntrinsics(fx=800.0, fy=800.0, cx=320.0, cy=240.0, width=640, height=480)
    with pytest.raises(ValueError):
        SimScene(intrinsics=k, markers=(), duration_us=0)
    with pytest.raises(ValueError):
        SimScene(intrinsics=k, markers=(), duration_us=10, blob_radius_px=0.2)
    m = four_led_marker()
    traj = Trajectory.constant(Transform(np.eye(3), [0, 0, 1.0]))
    with pytest.raises(ValueError):
        SimScene(intrinsics=k, markers=((m, traj), (m, traj)), duration_us=10)


def test_marker_validation():
    with pytest.raises(ValueError):  # < 4 LEDs
        AlmConfig("bad", (LedSpec(0, (0, 0, 0), 25000.0),
                          LedSpec(1, (0.1, 0, 0), 20000.0),
                          LedSpec(2, (0, 0.1, 0), 12500.0)))
    with pytest.raises(ValueError):  # duplicate frequency
        four = four_led_marker()
        AlmConfig("bad", (four.leds[0], four.leds[1], four.leds[2],
                          LedSpec(3, (-0.05, 0.05, 0.0), four.leds[0].frequency)))
    with pytest.raises(ValueError):  # non-integer period
        LedSpec(0, (0, 0, 0), 30_001.0)
    with pytest.raises(ValueError):  # non-planar layout
        AlmConfig("bad", (LedSpec(0, (0, 0, 0), 25000.0),
                          LedSpec(1, (0.1, 0, 0), 20000.0),
                          LedSpec(2, (0, 0.1, 0), 12500.0),
                          LedSpec(3, (0.1, 0.1, 0.05), 10000.0)))


def test_square_marker_layout():
    m = square_marker("m", side_m=0.59)
    pts = m.positions()
    assert pts.shape == (8, 3)
    np.testing.assert_allclose(np.max(np.abs(pts[:, :2])), 0.295)
    np.testing.assert_allclose(pts[:, 2], 0.0)
    # default periods: all distinct, 5-25 kHz
    periods = np.array([l.period_us for l in m.leds])
    np.testing.assert_array_equal(periods, [40, 50, 64, 80, 100, 125, 160, 200])
