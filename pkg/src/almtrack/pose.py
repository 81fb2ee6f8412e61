"""Planar pose estimation from LED correspondences.

The solver is homography-based: a first-order analysis of the normalized
homography at the object centroid yields exactly two rotation candidates
(the classic planar two-fold ambiguity).  Both are completed with a
least-squares translation, scored by reprojection RMS, and the better one
is returned with the runner-up kept as the alternate.  A damped
Gauss-Newton step then polishes the winner against the raw pixel
measurements.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import CameraIntrinsics, Transform, normalized_coords, project_to_so3, skew, so3_exp

SVD_RANK_TOL = 1e-10
RMS_TIE_TOL = 1e-12
LM_LAMBDA_INIT = 1e-3
LM_LAMBDA_MAX = 1e8
LM_GRAD_TOL = 1e-10
LM_MAX_ITER = 50


class DegenerateGeometry(ValueError):
    """Correspondence set cannot constrain a homography or pose."""


class InvalidPose(ValueError):
    """No pose candidate places the marker in front of the camera."""


@dataclass(frozen=True)
class Correspondence:
    object_point: np.ndarray  # (x, y) on the marker plane, meters
    image_point: np.ndarray  # (u, v) pixels
    led_id: int = -1

    def __post_init__(self):
        object.__setattr__(
            self, "object_point", np.asarray(self.object_point, dtype=float).reshape(2)
        )
        object.__setattr__(
            self, "image_point", np.asarray(self.image_point, dtype=float).reshape(2)
        )


@dataclass(frozen=True)
class PoseSolution:
    pose: Transform
    reprojection_rms: float  # pixels
    per_point_errors: np.ndarray  # pixels, in correspondence order
    alternate: Transform | None = None
    alternate_rms: float | None = None
    refine_diverged: bool = False


def _corr_arrays(correspondences):
    obj = np.array([c.object_point for c in correspondences], dtype=float)
    img = np.array([c.image_point for c in correspondences], dtype=float)
    return obj, img


def _normalize_points(pts: np.ndarray):
    """Hartley normalization: centroid to origin, mean distance sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.linalg.norm(pts - c, axis=1).mean()
    if d < 1e-15:
        raise DegenerateGeometry("all points coincide")
    s = np.sqrt(2.0) / d
    t = np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])
    return t, (pts - c) * s


def estimate_homography(object_points, image_points) -> np.ndarray:
    """DLT homography mapping object plane points to image points.

    Returns a 3x3 matrix scaled so the bottom-right entry is 1 (unit
    Frobenius norm if that entry vanishes).  Raises DegenerateGeometry for
    fewer than 4 points or a rank-deficient (e.g. collinear) configuration.
    """
    obj = np.asarray(object_points, dtype=float)
    img = np.asarray(image_points, dtype=float)
    if obj.shape[0] < 4:
        raise DegenerateGeometry("homography needs at least 4 correspondences")
    if obj.shape != img.shape:
        raise ValueError("point sets must have matching shapes")
    t_obj, on = _normalize_points(obj)
    t_img, im = _normalize_points(img)
    n = obj.shape[0]
    a = np.zeros((2 * n, 9))
    a[0::2, 0] = -on[:, 0]
    a[0::2, 1] = -on[:, 1]
    a[0::2, 2] = -1.0
    a[0::2, 6] = im[:, 0] * on[:, 0]
    a[0::2, 7] = im[:, 0] * on[:, 1]
    a[0::2, 8] = im[:, 0]
    a[1::2, 3] = -on[:, 0]
    a[1::2, 4] = -on[:, 1]
    a[1::2, 5] = -1.0
    a[1::2, 6] = im[:, 1] * on[:, 0]
    a[1::2, 7] = im[:, 1] * on[:, 1]
    a[1::2, 8] = im[:, 1]
    _, s, vt = np.linalg.svd(a)
    if s[7] / s[0] < SVD_RANK_TOL:
        raise DegenerateGeometry(
            "correspondences do not constrain a homography (collinear points?)"
        )
    h = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_img) @ h @ t_obj
    if abs(h[2, 2]) > 1e-12 * np.linalg.norm(h):
        h = h / h[2, 2]
    else:
        h = h / np.linalg.norm(h)
        flat = h.ravel()
        if flat[np.argmax(np.abs(flat))] < 0:
            h = -h
    return h


def apply_homography(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    p = np.atleast_2d(np.asarray(pts, dtype=float))
    w = h[2, 0] * p[:, 0] + h[2, 1] * p[:, 1] + h[2, 2]
    out = np.empty_like(p)
    out[:, 0] = (h[0, 0] * p[:, 0] + h[0, 1] * p[:, 1] + h[0, 2]) / w
    out[:, 1] = (h[1, 0] * p[:, 0] + h[1, 1] * p[:, 1] + h[1, 2]) / w
    return out


def _rotation_e3_to(target: np.ndarray) -> np.ndarray:
    """Rotation taking (0,0,1) to the given unit vector with positive z."""
    sin_t = np.hypot(target[0], target[1])
    if sin_t < 1e-15:
        return np.eye(3)
    axis = np.array([-target[1], target[0], 0.0]) / sin_t
    cos_t = target[2]
    k = skew(axis)
    return np.eye(3) + sin_t * k + (1.0 - cos_t) * (k @ k)


def _two_rotations(v: np.ndarray, jac: np.ndarray):
    """The two rotations consistent with the homography's first-order
    behavior (value v, Jacobian jac) at the object centroid."""
    ray = np.array([v[0], v[1], 1.0])
    ray = ray / np.linalg.norm(ray)
    rv = _rotation_e3_to(ray)
    b = np.array(
        [
            [rv[0, 0] - v[0] * rv[2, 0], rv[0, 1] - v[0] * rv[2, 1]],
            [rv[1, 0] - v[1] * rv[2, 0], rv[1, 1] - v[1] * rv[2, 1]],
        ]
    )
    det_b = b[0, 0] * b[1, 1] - b[0, 1] * b[1, 0]
    if abs(det_b) < 1e-15:
        raise DegenerateGeometry("degenerate viewing geometry")
    b_inv = np.array([[b[1, 1], -b[0, 1]], [-b[1, 0], b[0, 0]]]) / det_b
    a = b_inv @ jac
    fro2 = float((a * a).sum())
    det_a = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    disc = max(fro2 * fro2 - 4.0 * det_a * det_a, 0.0)
    gamma = np.sqrt(0.5 * (fro2 + np.sqrt(disc)))  # largest singular value
    if gamma < 1e-15:
        raise DegenerateGeometry("vanishing homography Jacobian")
    r22 = a / gamma
    tt = r22.T @ r22
    c1 = np.sqrt(max(1.0 - tt[0, 0], 0.0))
    if c1 > 1e-9:
        c2 = -tt[0, 1] / c1
    else:
        c2 = np.sqrt(max(1.0 - tt[1, 1], 0.0))
    out = []
    for sign in (1.0, -1.0):
        col1 = np.array([r22[0, 0], r22[1, 0], sign * c1])
        col2 = np.array([r22[0, 1], r22[1, 1], sign * c2])
        col3 = np.cross(col1, col2)
        r_tilde = np.column_stack([col1, col2, col3])
        out.append(project_to_so3(rv @ r_tilde))
    return out


def _translation_for(rot: np.ndarray, obj3: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Least-squares translation given the rotation and normalized image points."""
    n = obj3.shape[0]
    rx = obj3 @ rot.T
    a = np.zeros((2 * n, 3))
    a[0::2, 0] = 1.0
    a[0::2, 2] = -q[:, 0]
    a[1::2, 1] = 1.0
    a[1::2, 2] = -q[:, 1]
    b = np.empty(2 * n)
    b[0::2] = q[:, 0] * rx[:, 2] - rx[:, 0]
    b[1::2] = q[:, 1] * rx[:, 2] - rx[:, 1]
    t, *_ = np.linalg.lstsq(a, b, rcond=None)
    return t


def reprojection_errors(pose: Transform, correspondences, k: CameraIntrinsics):
    """Per-point pixel errors and their RMS; inf when a point falls behind
    the camera."""
    obj, img = _corr_arrays(correspondences)
    return _reproj(pose.rotation, pose.displacement, _lift(obj), img, k)


def _lift(obj2: np.ndarray) -> np.ndarray:
    return np.column_stack([obj2, np.zeros(obj2.shape[0])])


def _reproj(rot, t, obj3, img, k: CameraIntrinsics):
    p = obj3 @ rot.T + t
    z = p[:, 2]
    if np.any(z <= 0):
        per = np.full(obj3.shape[0], np.inf)
        return np.inf, per
    u = k.fx * p[:, 0] / z + k.cx
    v = k.fy * p[:, 1] / z + k.cy
    per = np.hypot(u - img[:, 0], v - img[:, 1])
    return float(np.sqrt(np.mean(per**2))), per


def ippe_pose(correspondences, k: CameraIntrinsics) -> PoseSolution:
    """Closed-form planar pose: best of the two homography-consistent
    candidates by reprojection RMS; the other is kept as the alternate.

    Ties (exactly frontal views) are broken toward the candidate whose
    plane normal is most anti-parallel to the viewing ray, which is the
    smaller-tilt interpretation.
    """
    obj, img = _corr_arrays(correspondences)
    if obj.shape[0] < 4:
        raise DegenerateGeometry("pose needs at least 4 correspondences")
    centroid = obj.mean(axis=0)
    q = normalized_coords(k, img)
    h = estimate_homography(obj - centroid, q)
    if abs(h[2, 2]) < 1e-12:
        raise DegenerateGeometry("object centroid projects to infinity")
    h = h / h[2, 2]
    v = np.array([h[0, 2], h[1, 2]])
    jac = np.array(
        [
            [h[0, 0] - h[2, 0] * h[0, 2], h[0, 1] - h[2, 1] * h[0, 2]],
            [h[1, 0] - h[2, 0] * h[1, 2], h[1, 1] - h[2, 1] * h[1, 2]],
        ]
    )
    obj3 = _lift(obj)
    centroid3 = np.array([centroid[0], centroid[1], 0.0])
    candidates = []
    for rot in _two_rotations(v, jac):
        t = _translation_for(rot, obj3, q)
        rms, per = _reproj(rot, t, obj3, img, k)
        z_c = (rot @ centroid3 + t)[2]
        # head-on score for tie-breaking: |normal . viewing ray|
        ray = rot @ centroid3 + t
        nray = np.linalg.norm(ray)
        headon = abs(np.dot(rot[:, 2], ray / nray)) if nray > 0 else 0.0
        candidates.append((rms, -headon, rot, t, per, z_c))

    valid = [c for c in candidates if c[5] > 0 and np.isfinite(c[0])]
    if not valid:
        raise InvalidPose("both candidates place the marker behind the camera")
    valid.sort(key=lambda c: (c[0], c[1]))
    best = valid[0]
    other = [c for c in candidates if c is not best]
    alt = other[0] if other and np.isfinite(other[0][0]) else None
    return PoseSolution(
        pose=Transform(best[2], best[3]),
        reprojection_rms=best[0],
        per_point_errors=best[4],
        alternate=Transform(alt[2], alt[3]) if alt is not None else None,
        alternate_rms=alt[0] if alt is not None else None,
    )


def _pose_jacobian(rot, t, obj3, k: CameraIntrinsics):
    """Stacked 2n x 6 Jacobian of pixel residuals wrt (rotation, translation)
    increments; rotation perturbed on the left, R <- exp(dw) R."""
    p = obj3 @ rot.T + t
    n = obj3.shape[0]
    z = p[:, 2]
    jac = np.zeros((2 * n, 6))
    # d(pixel)/d(camera point)
    ju = np.zeros((n, 3))
    jv = np.zeros((n, 3))
    ju[:, 0] = k.fx / z
    ju[:, 2] = -k.fx * p[:, 0] / z**2
    jv[:, 1] = k.fy / z
    jv[:, 2] = -k.fy * p[:, 1] / z**2
    # d(camera point)/d(dw) = -skew(p - t); d/d(dt) = I
    w = p - t
    dp_dw = np.zeros((n, 3, 3))
    dp_dw[:, 0, 1] = w[:, 2]
    dp_dw[:, 0, 2] = -w[:, 1]
    dp_dw[:, 1, 0] = -w[:, 2]
    dp_dw[:, 1, 2] = w[:, 0]
    dp_dw[:, 2, 0] = w[:, 1]
    dp_dw[:, 2, 1] = -w[:, 0]
    jac[0::2, :3] = np.einsum("ni,nij->nj", ju, dp_dw)
    jac[1::2, :3] = np.einsum("ni,nij->nj", jv, dp_dw)
    jac[0::2, 3:] = ju
    jac[1::2, 3:] = jv
    return jac


def refine_pose(sol: PoseSolution, correspondences, k: CameraIntrinsics,
                max_iter: int = LM_MAX_ITER) -> PoseSolution:
    """Damped Gauss-Newton polish of the principal pose.

    Damping starts at 1e-3, divides by 10 on a cost decrease and multiplies
    by 10 on an increase; iteration stops on a vanishing gradient, the
    iteration cap, or when damping runs out (the initial solution is then
    returned unchanged with refine_diverged set).
    """
    obj, img = _corr_arrays(correspondences)
    obj3 = _lift(obj)
    rot = sol.pose.rotation.copy()
    t = sol.pose.displacement.copy()

    def residual(r_, t_):
        p = obj3 @ r_.T + t_
        z = p[:, 2]
        if np.any(z <= 0):
            return None
        res = np.empty(2 * obj3.shape[0])
        res[0::2] = k.fx * p[:, 0] / z + k.cx - img[:, 0]
        res[1::2] = k.fy * p[:, 1] / z + k.cy - img[:, 1]
        return res

    res = residual(rot, t)
    if res is None:
        return replace(sol, refine_diverged=True)
    cost = float(res @ res)
    lam = LM_LAMBDA_INIT
    improved = False
    for _ in range(max_iter):
        jac = _pose_jacobian(rot, t, obj3, k)
        grad = jac.T @ res
        if np.linalg.norm(grad) < LM_GRAD_TOL:
            break
        jtj = jac.T @ jac
        stepped = False
        while lam <= LM_LAMBDA_MAX:
            try:
                delta = np.linalg.solve(jtj + lam * np.eye(6), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            rot_new = project_to_so3(so3_exp(delta[:3]) @ rot)
            t_new = t + delta[3:]
            res_new = residual(rot_new, t_new)
            if res_new is not None and float(res_new @ res_new) < cost:
                rot, t, res = rot_new, t_new, res_new
                cost = float(res @ res)
                lam /= 10.0
                stepped = True
                improved = True
                break
            lam *= 10.0
        if not stepped:
            break
    if not improved and lam > LM_LAMBDA_MAX:
        return replace(sol, refine_diverged=True)
    per = np.hypot(res[0::2], res[1::2])
    rms = float(np.sqrt(np.mean(per**2)))
    if rms > sol.reprojection_rms:
        # never return something worse than the closed-form start
        return replace(sol, refine_diverged=True)
    return PoseSolution(
        pose=Transform(rot, t),
        reprojection_rms=rms,
        per_point_errors=per,
        alternate=sol.alternate,
        alternate_rms=sol.alternate_rms,
        refine_diverged=False,
    )


def solve_pose(correspondences, k: CameraIntrinsics, refine: bool = True) -> PoseSolution:
    sol = ippe_pose(correspondences, k)
    return refine_pose(sol, correspondences, k) if refine else sol


def check_tracking_lost(sol: PoseSolution, trackers, now_us: int | None = None,
                        starvation_periods: float = 5.0) -> bool:
    """Tracking is lost when any tracker's reprojection error strictly
    exceeds its mean event distance (radius / 2), or when any tracker has
    been starved of events for the configured number of blink periods.

    per_point_errors must be aligned with the tracker list (the pipeline
    builds correspondences in tracker order).
    """
    if len(sol.per_point_errors) != len(trackers):
        raise ValueError("per-point errors and trackers are not aligned")
    for err, tr in zip(sol.per_point_errors, trackers):
        if err > tr.mean_event_distance:
            return True
        if now_us is not None and tr.is_starved(now_us, starvation_periods):
            return True
    return False
