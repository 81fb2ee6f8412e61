import warnings

import numpy as np
import pytest

from almtrack.calibrate import (
    CalibMeasurement,
    CalibSolution,
    calibration_cost,
    calibration_cost_gradient,
    identity_solution,
    load_report,
    perturb_solution,
    read_measurements_csv,
    residual_transform,
    save_report,
    solution_from_dict,
    solution_to_dict,
    solve_hidden_transforms,
    synthesize_measurements,
    write_measurements_csv,
)
from almtrack.geometry import Transform, rotation_angle_deg, so3_exp


def test_identity_solution_shape():
    sol = identity_solution(3)
    assert len(sol.marker_offsets) == 3
    np.testing.assert_array_equal(sol.cam_offset.rotation, np.eye(3))
    for m in sol.marker_offsets:
        np.testing.assert_array_equal(m.displacement, np.zeros(3))


def test_cost_zero_at_truth():
    measurements, truth = synthesize_measurements(20, n_markers=2, seed=0)
    assert calibration_cost(measurements, truth) < 1e-24
    for meas in measurements:
        for m in range(2):
            r = residual_transform(meas, truth, m)
            np.testing.assert_allclose(r.rotation, np.eye(3), atol=1e-12)
            np.testing.assert_allclose(r.displacement, 0.0, atol=1e-12)


def test_cost_hand_value():
    # identity everything except a pure 0.2 m offset in the marker view:
    # cost = (|d| + 0.1 * |I - R|_F)^2 = 0.2^2 with no rotation part
    meas = CalibMeasurement(
        t_us=0,
        cam_body=Transform.identity(),
        marker_bodies=(Transform.identity(),),
        marker_views=(Transform(np.eye(3), [0.2, 0.0, 0.0]),),
    )
    sol = identity_solution(1)
    np.testing.assert_allclose(calibration_cost([meas], sol), 0.04, atol=1e-15)
    # add a quarter-turn residual rotation: |I - R|_F = 2 sin(45 deg) * sqrt(2)
    meas_rot = CalibMeasurement(
        t_us=0,
        cam_body=Transform.identity(),
        marker_bodies=(Transform.identity(),),
        marker_views=(Transform(so3_exp([0.0, 0.0, np.pi / 2]), [0.2, 0.0, 0.0]),),
    )
    frob = np.linalg.norm(np.eye(3) - so3_exp([0.0, 0.0, np.pi / 2]))
    np.testing.assert_allclose(calibration_cost([meas_rot], sol),
                               (0.2 + 0.1 * frob) ** 2, atol=1e-15)


def test_gradient_matches_finite_differences():
    measurements, truth = synthesize_measurements(12, n_markers=2, seed=3)
    rng = np.random.default_rng(4)
    # evaluate away from the optimum where the cost surface is smooth
    sol = perturb_solution(truth, rng.normal(scale=0.05, size=18))
    cost, grad = calibration_cost_gradient(measurements, sol)
    assert cost > 1e-4
    eps = 1e-6
    fd = np.zeros_like(grad)
    for j in range(grad.shape[0]):
        d = np.zeros_like(grad)
        d[j] = eps
        up = calibration_cost(measurements, perturb_solution(sol, d))
        dn = calibration_cost(measurements, perturb_solution(sol, -d))
        fd[j] = (up - dn) / (2.0 * eps)
    rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-9)
    assert np.max(rel) < 1e-5


def test_noiseless_recovery():
    measurements, truth = synthesize_measurements(15, n_markers=2, seed=1)
    sol = solve_hidden_transforms(measurements)
    assert sol.final_cost < 1e-18
    pairs = [(sol.cam_offset, truth.cam_offset)]
    pairs += list(zip(sol.marker_offsets, truth.marker_offsets))
    for est, ref in pairs:
        assert np.linalg.norm(est.displacement - ref.displacement) < 1e-6
        assert rotation_angle_deg(est.rotation.T @ ref.rotation) < 1e-5


def test_noisy_recovery_degrades_gracefully():
    measurements, truth = synthesize_measurements(
        40, n_markers=1, seed=2, rot_noise_deg=0.1, trans_noise_m=0.001
    )
    sol = solve_hidden_transforms(measurements)
    assert sol.final_cost > 0.0
    assert np.linalg.norm(sol.cam_offset.displacement
                          - truth.cam_offset.displacement) < 0.01
    assert rotation_angle_deg(sol.cam_offset.rotation.T
                              @ truth.cam_offset.rotation) < 0.5


def test_measurement_order_invariance():
    measurements, _ = synthesize_measurements(15, n_markers=1, seed=5)
    a = solve_hidden_transforms(measurements)
    b = solve_hidden_transforms(list(reversed(measurements)))
    np.testing.assert_allclose(a.cam_offset.as_flat(), b.cam_offset.as_flat(),
                               atol=1e-8)
    np.testing.assert_allclose(a.marker_offsets[0].as_flat(),
                               b.marker_offsets[0].as_flat(), atol=1e-8)


def test_perturb_solution_retraction():
    sol = identity_solution(1)
    delta = np.zeros(12)
    same = perturb_solution(sol, delta)
    np.testing.assert_array_equal(same.cam_offset.as_flat(), sol.cam_offset.as_flat())
    delta[0:3] = [0.1, 0.0, 0.0]  # camera rotation increment
    delta[3:6] = [0.0, 0.2, 0.0]  # camera translation increment
    moved = perturb_solution(sol, delta)
    np.testing.assert_allclose(
        rotation_angle_deg(moved.cam_offset.rotation), np.rad2deg(0.1), atol=1e-9
    )
    np.testing.assert_allclose(moved.cam_offset.displacement, [0.0, 0.2, 0.0],
                               atol=1e-12)


def test_solver_input_validation():
    measurements, _ = synthesize_measurements(4, n_markers=1, seed=0)
    with pytest.raises(ValueError):
        solve_hidden_transforms(measurements[:1])
    lone = measurements[0]
    mixed = [lone, CalibMeasurement(t_us=1, cam_body=lone.cam_body,
                                    marker_bodies=lone.marker_bodies * 2,
                                    marker_views=lone.marker_views * 2)]
    with pytest.raises(ValueError):
        solve_hidden_transforms(mixed)


def test_low_diversity_warns():
    # identical poses in every measurement: the loop constraints are rank
    # deficient and the solver must say so
    body = Transform(so3_exp([0.1, 0.2, 0.3]), [1.0, 0.0, 0.5])
    cam = Transform(so3_exp([0.0, 0.1, 0.0]), [0.0, 0.0, 2.0])
    view = (cam.inverse()).compose(body)
    measurements = [
        CalibMeasurement(t_us=i, cam_body=cam, marker_bodies=(body,),
                         marker_views=(view,))
        for i in range(5)
    ]
    with pytest.warns(UserWarning):
        sol = solve_hidden_transforms(measurements)
    assert sol.diversity_warning


def test_measurements_csv_round_trip(tmp_path):
    measurements, _ = synthesize_measurements(6, n_markers=2, seed=7)
    path = tmp_path / "measurements.csv"
    write_measurements_csv(path, measurements)
    back = read_measurements_csv(path)
    assert len(back) == len(measurements)
    for a, b in zip(measurements, back):
        assert a.t_us == b.t_us
        np.testing.assert_array_equal(a.cam_body.as_flat(), b.cam_body.as_flat())
        for ma, mb in zip(a.marker_bodies, b.marker_bodies):
            np.testing.assert_array_equal(ma.as_flat(), mb.as_flat())
        for va, vb in zip(a.marker_views, b.marker_views):
            np.testing.assert_array_equal(va.as_flat(), vb.as_flat())


def test_report_yaml_round_trip(tmp_path):
    _, truth = synthesize_measurements(2, n_markers=3, seed=9)
    sol = CalibSolution(cam_offset=truth.cam_offset,
                        marker_offsets=truth.marker_offsets,
                        final_cost=1.25e-9, iterations=17)
    back = solution_from_dict(solution_to_dict(sol))
    path = tmp_path / "report.yaml"
    save_report(path, sol)
    loaded = load_report(path)
    for other in (back, loaded):
        np.testing.assert_allclose(other.cam_offset.as_flat(),
                                   sol.cam_offset.as_flat(), atol=1e-15)
        assert len(other.marker_offsets) == 3
        assert other.final_cost == sol.final_cost
        assert other.iterations == 17
