import numpy as np
import pytest

from almtrack.geometry import (
    CameraIntrinsics,
    PointBehindCamera,
    Transform,
    compose,
    normalized_coords,
    pose_error,
    project,
    project_to_so3,
    rotation_angle_deg,
    rotation_to_quaternion,
    skew,
    so3_exp,
    so3_log,
)


def random_rotation(rng):
    w = rng.normal(size=3)
    w = w / np.linalg.norm(w) * rng.uniform(0.0, np.pi - 1e-3)
    return so3_exp(w)


def test_transform_apply_matches_matrix_form():
    rng = np.random.default_rng(0)
    t = Transform(random_rotation(rng), rng.normal(size=3))
    pts = rng.normal(size=(7, 3))
    expected = pts @ t.rotation.T + t.displacement
    np.testing.assert_allclose(t.apply(pts), expected, atol=1e-14)
    # single point keeps its shape
    assert t.apply(pts[0]).shape == (3,)


def test_transform_inverse_round_trip():
    rng = np.random.default_rng(1)
    for _ in range(20):
        t = Transform(random_rotation(rng), rng.normal(size=3))
        p = rng.normal(size=(5, 3))
        np.testing.assert_allclose(t.inverse().apply(t.apply(p)), p, atol=1e-12)
        back = t.compose(t.inverse())
        np.testing.assert_allclose(back.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(back.displacement, 0.0, atol=1e-12)


def test_compose_applies_second_argument_first():
    rng = np.random.default_rng(2)
    a = Transform(random_rotation(rng), rng.normal(size=3))
    b = Transform(random_rotation(rng), rng.normal(size=3))
    p = rng.normal(size=3)
    np.testing.assert_allclose(a.compose(b).apply(p), a.apply(b.apply(p)), atol=1e-12)
    np.testing.assert_allclose(compose(a, b).apply(p), a.apply(b.apply(p)), atol=1e-12)


def test_flat_serialization_round_trip():
    rng = np.random.default_rng(3)
    t = Transform(random_rotation(rng), rng.normal(size=3))
    flat = t.as_flat()
    assert flat.shape == (12,)
    # row-major rotation first, then displacement
    np.testing.assert_array_equal(flat[:9], t.rotation.reshape(9))
    np.testing.assert_array_equal(flat[9:], t.displacement)
    back = Transform.from_flat(flat)
    np.testing.assert_array_equal(back.rotation, t.rotation)
    np.testing.assert_array_equal(back.displacement, t.displacement)


def test_non_orthonormal_rotation_rejected():
    with pytest.raises(ValueError):
        Transform(np.eye(3) * 1.5, np.zeros(3))


def test_project_pinhole_formula():
    k = CameraIntrinsics(fx=800.0, fy=780.0, cx=320.0, cy=240.0, width=640, height=480)
    pts = np.array([[0.1, -0.2, 2.0], [0.0, 0.0, 1.0]])
    px = project(k, pts)
    np.testing.assert_allclose(px[0], [800.0 * 0.05 + 320.0, 780.0 * -0.1 + 240.0])
    np.testing.assert_allclose(px[1], [320.0, 240.0])


def test_project_rejects_points_behind_camera():
    k = CameraIntrinsics(fx=800.0, fy=800.0, cx=320.0, cy=240.0, width=640, height=480)
    with pytest.raises(PointBehindCamera):
        project(k, np.array([[0.0, 0.0, -1.0]]))
    with pytest.raises(PointBehindCamera):
        project(k, np.array([[0.0, 0.0, 0.0]]))


def test_normalized_coords_inverts_intrinsics():
    k = CameraIntrinsics(fx=800.0, fy=780.0, cx=321.5, cy=239.5, width=640, height=480)
    rng = np.random.default_rng(4)
    pts = rng.uniform([-0.5, -0.5, 1.0], [0.5, 0.5, 4.0], size=(30, 3))
    px = project(k, pts)
    xy = normalized_coords(k, px)
    np.testing.assert_allclose(xy, pts[:, :2] / pts[:, 2:3], atol=1e-12)


def test_skew_matches_cross_product():
    rng = np.random.default_rng(5)
    w = rng.normal(size=3)
    v = rng.normal(size=3)
    np.testing.assert_allclose(skew(w) @ v, np.cross(w, v), atol=1e-14)
    np.testing.assert_allclose(skew(w).T, -skew(w), atol=0)


def test_so3_exp_log_round_trip():
    rng = np.random.default_rng(6)
    for _ in range(50):
        w = rng.normal(size=3)
        w = w / np.linalg.norm(w) * rng.uniform(1e-8, np.pi - 1e-6)
        r = so3_exp(w)
        np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(so3_log(r), w, atol=1e-7)
    np.testing.assert_allclose(so3_exp([0.0, 0.0, 0.0]), np.eye(3), atol=0)
    np.testing.assert_allclose(so3_log(np.eye(3)), 0.0, atol=0)


def test_so3_exp_known_quarter_turn():
    r = so3_exp([0.0, 0.0, np.pi / 2.0])
    np.testing.assert_allclose(r @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-12)


def test_project_to_so3_restores_orthonormality():
    rng = np.random.default_rng(7)
    r = random_rotation(rng)
    noisy = r + rng.normal(scale=1e-4, size=(3, 3))
    fixed = project_to_so3(noisy)
    np.testing.assert_allclose(fixed @ fixed.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(fixed) > 0.0
    assert rotation_angle_deg(fixed.T @ r) < 0.05


def test_rotation_angle_deg_small_and_large():
    assert rotation_angle_deg(np.eye(3)) == 0.0
    np.testing.assert_allclose(rotation_angle_deg(so3_exp([0.0, 0.3, 0.0])),
                               np.rad2deg(0.3), atol=1e-9)
    # atan2 form stays accurate where acos of a trace would round to zero
    tiny = np.deg2rad(1e-7)
    np.testing.assert_allclose(rotation_angle_deg(so3_exp([tiny, 0.0, 0.0])),
                               1e-7, rtol=1e-6)


def test_rotation_to_quaternion_matches_scipy():
    from scipy.spatial.transform import Rotation

    rng = np.random.default_rng(8)
    for _ in range(25):
        r = random_rotation(rng)
        q = rotation_to_quaternion(r)  # (w, x, y, z), w >= 0
        assert q[0] >= 0.0
        np.testing.assert_allclose(np.linalg.norm(q), 1.0, atol=1e-12)
        ref = Rotation.from_matrix(r).as_quat()  # (x, y, z, w)
        ref = np.r_[ref[3], ref[:3]]
        if ref[0] < 0:
            ref = -ref
        np.testing.assert_allclose(q, ref, atol=1e-9)


def test_pose_error_components():
    truth = Transform(so3_exp([0.0, 0.0, 0.1]), [1.0, 2.0, 3.0])
    est = Transform(so3_exp([0.0, 0.0, 0.1 + np.deg2rad(2.0)]), [1.0, 2.0, 3.5])
    err = pose_error(est, truth)
    np.testing.assert_allclose(err.translation_error, [0.0, 0.0, -0.5], atol=1e-12)
    np.testing.assert_allclose(err.translation_norm, 0.5, atol=1e-12)
    np.testing.assert_allclose(err.orientation_error_deg, 2.0, atol=1e-9)
