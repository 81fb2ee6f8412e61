"""Hidden-transform calibration between a motion-capture rig and the camera.

A motion-capture system reports body-frame poses for the camera rig and for
each marker rig, while the pose estimator reports marker poses in the camera
optical frame.  Neither the optical frame inside the camera body nor the
marker frame inside its rig body is directly measurable; this module
recovers both from a batch of simultaneous measurements.

With Y the camera-body-to-optical offset and X_i the marker-body-to-marker
offset, each measurement closes the kinematic loop

    H_W_Mb_i . X_i  ==  H_W_Cb . Y . H_C_Mi

and the residual transform (left side inverted against the right) should be
the identity.  The cost penalizes its displacement norm plus a weighted
Frobenius distance of its rotation from the identity, summed over all
measurements and markers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import yaml

from .geometry import Transform, project_to_so3, rotation_angle_deg, skew, so3_exp

ROTATION_WEIGHT = 0.1
LM_LAMBDA_INIT = 1e-3
LM_LAMBDA_MAX = 1e10
COST_DECREASE_TOL = 1e-12
STEP_NORM_TOL = 1e-10
DIVERSITY_WARN_DEG = 5.0


@dataclass(frozen=True)
class CalibMeasurement:
    """One synchronized snapshot: mocap body poses plus estimated marker
    poses in the camera optical frame (one per marker, fixed order)."""

    t_us: int
    cam_body: Transform  # camera rig body in the mocap world
    marker_bodies: tuple  # marker rig bodies in the mocap world
    marker_views: tuple  # markers in the camera optical frame

    def __post_init__(self):
        object.__setattr__(self, "marker_bodies", tuple(self.marker_bodies))
        object.__setattr__(self, "marker_views", tuple(self.marker_views))
        if len(self.marker_bodies) != len(self.marker_views):
            raise ValueError("marker body and view counts differ")
        if not self.marker_bodies:
            raise ValueError("measurement carries no markers")

    @property
    def n_markers(self) -> int:
        return len(self.marker_bodies)


@dataclass(frozen=True)
class CalibSolution:
    cam_offset: Transform  # camera body -> optical frame
    marker_offsets: tuple  # marker body -> marker frame, per marker
    final_cost: float = 0.0
    iterations: int = 0
    diversity_warning: bool = False

    def __post_init__(self):
        object.__setattr__(self, "marker_offsets", tuple(self.marker_offsets))

    @property
    def n_markers(self) -> int:
        return len(self.marker_offsets)


def identity_solution(n_markers: int) -> CalibSolution:
    return CalibSolution(
        cam_offset=Transform.identity(),
        marker_offsets=tuple(Transform.identity() for _ in range(n_markers)),
    )


def residual_transform(meas: CalibMeasurement, sol: CalibSolution, marker: int) -> Transform:
    """Loop-closure error for one marker of one measurement; identity when
    the solution is exact."""
    left = meas.marker_bodies[marker].compose(sol.marker_offsets[marker])
    right = meas.cam_body.compose(sol.cam_offset).compose(meas.marker_views[marker])
    return left.inverse().compose(right)


def _residual_parts(meas: CalibMeasurement, sol: CalibSolution, marker: int):
    """Rotation/displacement residual plus the intermediates the analytic
    Jacobian needs."""
    g = meas.marker_bodies[marker].inverse().compose(meas.cam_body)
    rg, tg = g.rotation, g.displacement
    rc, tc = sol.cam_offset.rotation, sol.cam_offset.displacement
    p = meas.marker_views[marker]
    rp, tp = p.rotation, p.displacement
    x = sol.marker_offsets[marker]
    rm, tm = x.rotation, x.displacement

    r_b = rg @ rc @ rp
    t_b = rg @ (rc @ tp) + rg @ tc + tg
    r_tilde = rm.T @ r_b
    d_tilde = rm.T @ (t_b - tm)
    return r_tilde, d_tilde, (rg, rc, rp, rm, tp, tm, r_b, t_b)


def calibration_cost(measurements, sol: CalibSolution, w: float = ROTATION_WEIGHT) -> float:
    """Sum over measurements and markers of
    (|d_residual| + w * |I - R_residual|_F) ** 2."""
    total = 0.0
    for meas in measurements:
        for i in range(meas.n_markers):
            r_tilde, d_tilde, _ = _residual_parts(meas, sol, i)
            r = np.linalg.norm(d_tilde) + w * np.linalg.norm(np.eye(3) - r_tilde)
            total += r * r
    return float(total)


def _measurement_jacobian(parts):
    """Partials of the residual pair (d_tilde, vec(R_tilde)) wrt the twelve
    local increments (cam dw, cam dt, marker dw, marker dt), taken at zero.
    Rotations are perturbed on the left: R <- exp(delta) R, so the marker
    inverse picks up exp(-delta) on the right of Rm^T."""
    rg, rc, rp, rm, tp, tm, r_b, t_b = parts
    rmt = rm.T
    rmt_rg = rmt @ rg
    rc_tp = rc @ tp
    diff = t_b - tm
    jac_d = np.zeros((3, 12))
    jac_r = np.zeros((9, 12))
    for j in range(3):
        e = np.zeros(3)
        e[j] = 1.0
        sk = skew(e)
        jac_d[:, j] = rmt_rg @ np.cross(e, rc_tp)
        jac_r[:, j] = (rmt_rg @ sk @ rc @ rp).ravel()
        jac_d[:, 3 + j] = rmt_rg[:, j]
        jac_d[:, 6 + j] = -(rmt @ np.cross(e, diff))
        jac_r[:, 6 + j] = (-(rmt @ sk) @ r_b).ravel()
        jac_d[:, 9 + j] = -rmt[:, j]
    return jac_d, jac_r


def _scalar_residual_row(r_tilde, d_tilde, parts, w):
    """As-written residual |d| + w*|I-R| and its 12-entry gradient, guarding
    the non-smooth points at zero norm with a zero subgradient."""
    jac_d, jac_r = _measurement_jacobian(parts)
    dn = np.linalg.norm(d_tilde)
    i_r = np.eye(3) - r_tilde
    rn = np.linalg.norm(i_r)
    dr = np.zeros(12)
    if dn > 1e-15:
        dr += (d_tilde / dn) @ jac_d
    if rn > 1e-15:
        # d|I-R|_F/dtheta = <R - I, dR>_F / |I-R|_F = -<I-R, dR>_F / |I-R|_F
        dr += w * (-(i_r.ravel() / rn) @ jac_r)
    return dn + w * rn, dr


def calibration_cost_gradient(measurements, sol: CalibSolution, w: float = ROTATION_WEIGHT):
    """Cost and its analytic gradient wrt the local increments
    [cam dw, cam dt, marker0 dw, marker0 dt, ...] at the current solution."""
    m = sol.n_markers
    grad = np.zeros(6 * (m + 1))
    total = 0.0
    for meas in measurements:
        for i in range(m):
            r_tilde, d_tilde, parts = _residual_parts(meas, sol, i)
            r, dr = _scalar_residual_row(r_tilde, d_tilde, parts, w)
            total += r * r
            grad[:6] += 2.0 * r * dr[:6]
            grad[6 * (i + 1):6 * (i + 2)] += 2.0 * r * dr[6:]
    return float(total), grad


def perturb_solution(sol: CalibSolution, delta: np.ndarray) -> CalibSolution:
    """Retraction used by the solver and by gradient checks: left-multiplied
    exponential on each rotation, additive on each displacement."""
    m = sol.n_markers
    delta = np.asarray(delta, dtype=float).reshape(6 * (m + 1))
    cam = Transform(
        project_to_so3(so3_exp(delta[:3]) @ sol.cam_offset.rotation),
        sol.cam_offset.displacement + delta[3:6],
    )
    offs = []
    for i in range(m):
        d = delta[6 * (i + 1):6 * (i + 2)]
        offs.append(
            Transform(
                project_to_so3(so3_exp(d[:3]) @ sol.marker_offsets[i].rotation),
                sol.marker_offsets[i].displacement + d[3:],
            )
        )
    return CalibSolution(
        cam_offset=cam,
        marker_offsets=tuple(offs),
        final_cost=sol.final_cost,
        iterations=sol.iterations,
        diversity_warning=sol.diversity_warning,
    )


def _smooth_residuals(measurements, sol: CalibSolution, w: float):
    """Stacked smooth residual [d_tilde; w*vec(I-R_tilde)] per measurement
    and marker, with its Jacobian.  Shares its zero set with the target cost
    and is differentiable everywhere, so it makes a robust warm start."""
    m = sol.n_markers
    n_blocks = sum(meas.n_markers for meas in measurements)
    res = np.zeros(12 * n_blocks)
    jac = np.zeros((12 * n_blocks, 6 * (m + 1)))
    row = 0
    for meas in measurements:
        for i in range(m):
            r_tilde, d_tilde, parts = _residual_parts(meas, sol, i)
            jac_d, jac_r = _measurement_jacobian(parts)
            res[row:row + 3] = d_tilde
            res[row + 3:row + 12] = w * (np.eye(3) - r_tilde).ravel()
            jac[row:row + 3, :6] = jac_d[:, :6]
            jac[row:row + 3, 6 * (i + 1):6 * (i + 2)] = jac_d[:, 6:]
            jac[row + 3:row + 12, :6] = -w * jac_r[:, :6]
            jac[row + 3:row + 12, 6 * (i + 1):6 * (i + 2)] = -w * jac_r[:, 6:]
            row += 12
    return res, jac


def _scalar_residuals(measurements, sol: CalibSolution, w: float):
    """As-written scalar residual per measurement and marker with analytic
    Jacobian rows; squared and summed this is exactly the target cost."""
    m = sol.n_markers
    n_blocks = sum(meas.n_markers for meas in measurements)
    res = np.zeros(n_blocks)
    jac = np.zeros((n_blocks, 6 * (m + 1)))
    row = 0
    for meas in measurements:
        for i in range(m):
            r_tilde, d_tilde, parts = _residual_parts(meas, sol, i)
            r, dr = _scalar_residual_row(r_tilde, d_tilde, parts, w)
            res[row] = r
            jac[row, :6] = dr[:6]
            jac[row, 6 * (i + 1):6 * (i + 2)] = dr[6:]
            row += 1
    return res, jac


def _levenberg_marquardt(residual_fn, sol: CalibSolution, max_iter: int):
    """Damped least squares with on-manifold updates; returns the refined
    solution and the iteration count."""
    lam = LM_LAMBDA_INIT
    res, jac = residual_fn(sol)
    cost = float(res @ res)
    n = jac.shape[1]
    iters = 0
    for _ in range(max_iter):
        iters += 1
        grad = jac.T @ res
        if np.linalg.norm(grad, ord=np.inf) < 1e-14:
            break
        jtj = jac.T @ jac
        accepted = False
        while lam <= LM_LAMBDA_MAX:
            try:
                step = np.linalg.solve(jtj + lam * np.eye(n), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = perturb_solution(sol, step)
            res_new, jac_new = residual_fn(cand)
            cost_new = float(res_new @ res_new)
            if cost_new < cost:
                decrease = cost - cost_new
                sol, res, jac, cost = cand, res_new, jac_new, cost_new
                lam = max(lam / 10.0, 1e-15)
                accepted = True
                if decrease < COST_DECREASE_TOL or np.linalg.norm(step) < STEP_NORM_TOL:
                    return sol, iters
                break
            lam *= 10.0
        if not accepted:
            break
    return sol, iters


def _check_diversity(measurements) -> bool:
    """True when the relative camera-to-marker-body rotations span less than
    DIVERSITY_WARN_DEG, leaving the hidden transforms weakly observable."""
    n_markers = measurements[0].n_markers
    for i in range(n_markers):
        rots = [
            (meas.marker_bodies[i].inverse().compose(meas.cam_body)).rotation
            for meas in measurements
        ]
        max_angle = 0.0
        for a in range(len(rots)):
            for b in range(a + 1, len(rots)):
                max_angle = max(max_angle, rotation_angle_deg(rots[a].T @ rots[b]))
        if max_angle < DIVERSITY_WARN_DEG:
            return True
    return False


def solve_hidden_transforms(measurements, w: float = ROTATION_WEIGHT,
                            init: CalibSolution | None = None,
                            max_iter: int = 200) -> CalibSolution:
    """Recover the camera-body and marker-body hidden offsets.

    Two-stage solve from an identity initialization (or the given init): a
    smooth stacked residual with the same zero set as the target cost takes
    the large steps, then the as-written scalar residuals are polished with
    the same damped scheme.  Warns when the measurement set lacks rotational
    diversity, in which case parts of the solution are unobservable."""
    measurements = list(measurements)
    if len(measurements) < 2:
        raise ValueError("calibration needs at least two measurements")
    n_markers = measurements[0].n_markers
    for meas in measurements:
        if meas.n_markers != n_markers:
            raise ValueError("all measurements must carry the same markers")
    diversity_warning = _check_diversity(measurements)
    if diversity_warning:
        warnings.warn(
            "measurement rotations span less than %.1f deg; hidden transforms "
            "are weakly observable" % DIVERSITY_WARN_DEG,
            stacklevel=2,
        )
    sol = init if init is not None else identity_solution(n_markers)
    sol, it1 = _levenberg_marquardt(
        lambda s: _smooth_residuals(measurements, s, w), sol, max_iter
    )
    sol, it2 = _levenberg_marquardt(
        lambda s: _scalar_residuals(measurements, s, w), sol, max_iter
    )
    return CalibSolution(
        cam_offset=sol.cam_offset,
        marker_offsets=sol.marker_offsets,
        final_cost=calibration_cost(measurements, sol, w),
        iterations=it1 + it2,
        diversity_warning=diversity_warning,
    )


def _random_rotation(rng, max_angle_rad: float) -> np.ndarray:
    v = rng.normal(size=3)
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        return np.eye(3)
    angle = rng.uniform(0.0, max_angle_rad)
    return so3_exp(v / norm * angle)


def _random_transform(rng, max_angle_rad: float, max_trans_m: float) -> Transform:
    return Transform(
        _random_rotation(rng, max_angle_rad),
        rng.uniform(-max_trans_m, max_trans_m, size=3),
    )


def synthesize_measurements(n_measurements: int, n_markers: int = 1, seed: int = 0,
                            rot_noise_deg: float = 0.0, trans_noise_m: float = 0.0):
    """Random calibration dataset with exact loop closure plus optional
    Gaussian noise on the estimated marker views.  Returns the measurements
    and the true hidden transforms."""
    if n_measurements < 2:
        raise ValueError("need at least two measurements")
    rng = np.random.default_rng([seed, 11])
    truth = CalibSolution(
        cam_offset=_random_transform(rng, np.deg2rad(30.0), 0.15),
        marker_offsets=tuple(
            _random_transform(rng, np.deg2rad(30.0), 0.15) for _ in range(n_markers)
        ),
    )
    marker_bodies = []
    for i in range(n_markers):
        marker_bodies.append(
            Transform(
                _random_rotation(rng, np.pi),
                np.array([1.5 * i, 0.0, 0.0]) + rng.uniform(-0.3, 0.3, size=3),
            )
        )
    measurements = []
    for k in range(n_measurements):
        cam_body = Transform(
            _random_rotation(rng, np.pi),
            rng.uniform(-1.0, 1.0, size=3) + np.array([0.0, 0.0, 2.0]),
        )
        views = []
        for i in range(n_markers):
            exact = (
                cam_body.compose(truth.cam_offset)
            ).inverse().compose(marker_bodies[i].compose(truth.marker_offsets[i]))
            if rot_noise_deg > 0.0 or trans_noise_m > 0.0:
                noise = Transform(
                    so3_exp(rng.normal(scale=np.deg2rad(rot_noise_deg), size=3)),
                    rng.normal(scale=trans_noise_m, size=3),
                )
                exact = exact.compose(noise)
            views.append(exact)
        measurements.append(
            CalibMeasurement(
                t_us=k * 100_000,
                cam_body=cam_body,
                marker_bodies=tuple(marker_bodies),
                marker_views=tuple(views),
            )
        )
    return measurements, truth


_BLOCK_NAMES = ("r00", "r01", "r02", "r10", "r11", "r12", "r20", "r21", "r22",
                "dx", "dy", "dz")


def _csv_header(n_markers: int) -> str:
    cols = ["t_us"]
    cols += ["cb_%s" % n for n in _BLOCK_NAMES]
    for i in range(n_markers):
        cols += ["m%db_%s" % (i, n) for n in _BLOCK_NAMES]
        cols += ["m%dc_%s" % (i, n) for n in _BLOCK_NAMES]
    return ",".join(cols)


def write_measurements_csv(path, measurements) -> None:
    """Flat CSV: time, camera body transform, then per marker its body
    transform and camera-frame view, each as 12 row-major floats."""
    measurements = list(measurements)
    n_markers = measurements[0].n_markers
    with open(path, "w") as f:
        f.write(_csv_header(n_markers) + "\n")
        for meas in measurements:
            vals = [str(meas.t_us)]
            vals += [repr(float(x)) for x in meas.cam_body.as_flat()]
            for i in range(n_markers):
                vals += [repr(float(x)) for x in meas.marker_bodies[i].as_flat()]
                vals += [repr(float(x)) for x in meas.marker_views[i].as_flat()]
            f.write(",".join(vals) + "\n")


def read_measurements_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if (data.shape[1] - 13) % 24 != 0:
        raise ValueError("unexpected column count %d" % data.shape[1])
    n_markers = (data.shape[1] - 13) // 24
    out = []
    for row in data:
        bodies = []
        views = []
        for i in range(n_markers):
            off = 13 + 24 * i
            bodies.append(Transform.from_flat(row[off:off + 12]))
            views.append(Transform.from_flat(row[off + 12:off + 24]))
        out.append(
            CalibMeasurement(
                t_us=int(row[0]),
                cam_body=Transform.from_flat(row[1:13]),
                marker_bodies=tuple(bodies),
                marker_views=tuple(views),
            )
        )
    return out


def solution_to_dict(sol: CalibSolution) -> dict:
    return {
        "cam_offset": [float(x) for x in sol.cam_offset.as_flat()],
        "marker_offsets": [
            [float(x) for x in t.as_flat()] for t in sol.marker_offsets
        ],
        "final_cost": float(sol.final_cost),
        "iterations": int(sol.iterations),
        "diversity_warning": bool(sol.diversity_warning),
    }


def solution_from_dict(d: dict) -> CalibSolution:
    return CalibSolution(
        cam_offset=Transform.from_flat(np.asarray(d["cam_offset"], dtype=float)),
        marker_offsets=tuple(
            Transform.from_flat(np.asarray(x, dtype=float))
            for x in d["marker_offsets"]
        ),
        final_cost=float(d.get("final_cost", 0.0)),
        iterations=int(d.get("iterations", 0)),
        diversity_warning=bool(d.get("diversity_warning", False)),
    )


def save_report(path, sol: CalibSolution) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(solution_to_dict(sol), f, sort_keys=False)


def load_report(path) -> CalibSolution:
    with open(path) as f:
        return solution_from_dict(yaml.safe_load(f))
