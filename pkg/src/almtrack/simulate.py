"""Synthetic event streams for blinking LED markers.

The model is deliberately minimal and exactly invertible by the pipeline:
each LED blinks at a fixed integer-microsecond period, and every blink
deposits one +1 event at each integer pixel covered by a constant-radius
disc around the LED's projection.  A per-pixel refractory period, optional
center jitter and Poisson background noise are the only corruption knobs,
all driven by one seed so that identical scenes produce bitwise-identical
streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import yaml

from . import events as ev
from .geometry import CameraIntrinsics, Transform, project_to_so3, so3_log

# child RNG stream tags, so jitter and noise draws never interleave
_RNG_JITTER = 1
_RNG_NOISE = 2

PLANE_TOL = 1e-9


@dataclass(frozen=True)
class LedSpec:
    """One LED: marker-frame position, blink frequency, phase offset."""

    led_id: int
    position: np.ndarray  # meters, marker frame
    frequency: float  # Hz; 1e6/frequency must be an integer microsecond count
    phase_us: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "position", np.asarray(self.position, dtype=float).reshape(3)
        )
        if self.frequency <= 0:
            raise ValueError("LED frequency must be positive")
        period = 1e6 / self.frequency
        if abs(period - round(period)) > 1e-9:
            raise ValueError(
                f"LED {self.led_id}: period {period} us is not an integer; "
                "blink periods must be whole microseconds"
            )
        if self.phase_us < 0:
            raise ValueError("phase_us must be >= 0")

    @property
    def period_us(self) -> int:
        return int(round(1e6 / self.frequency))


@dataclass(frozen=True)
class AlmConfig:
    """Active LED marker: a rigid, coplanar arrangement of blinking LEDs."""

    name: str
    leds: tuple

    def __post_init__(self):
        led_list = tuple(sorted(self.leds, key=lambda l: l.led_id))
        object.__setattr__(self, "leds", led_list)
        if len(led_list) < 4:
            raise ValueError(f"marker {self.name!r} needs >= 4 LEDs for pose recovery")
        ids = [l.led_id for l in led_list]
        if len(set(ids)) != len(ids):
            raise ValueError(f"marker {self.name!r} has duplicate LED ids")
        freqs = [l.frequency for l in led_list]
        if len(set(freqs)) != len(freqs):
            raise ValueError(f"marker {self.name!r} has duplicate LED frequencies")
        # planarity is required by the homography-based pose path
        pts = self.positions()
        centered = pts - pts.mean(axis=0)
        svals = np.linalg.svd(centered, compute_uv=False)
        if svals[2] > PLANE_TOL:
            raise ValueError(
                f"marker {self.name!r} LEDs deviate {svals[2]:.2e} m from a plane"
            )

    def positions(self) -> np.ndarray:
        return np.array([l.position for l in self.leds])

    def frequencies(self) -> np.ndarray:
        return np.array([l.frequency for l in self.leds])

    def plane_frame(self) -> Transform:
        """Transform mapping marker-frame points into a frame where LEDs lie at z=0.

        Identity when the marker frame already has all LEDs at z=0 (the
        common construction); otherwise a deterministic best-fit-plane frame.
        """
        pts = self.positions()
        if np.max(np.abs(pts[:, 2])) <= PLANE_TOL:
            return Transform.identity()
        c = pts.mean(axis=0)
        _, _, vt = np.linalg.svd(pts - c)
        basis = vt  # rows: two in-plane axes, then the normal
        if np.linalg.det(basis) < 0:
            basis = basis * np.array([[1.0], [1.0], [-1.0]])
        # fix the in-plane orientation deterministically: x axis toward LED 0
        x_dir = basis[:2] @ (pts[0] - c)
        ang = np.arctan2(x_dir[1], x_dir[0])
        ca, sa = np.cos(-ang), np.sin(-ang)
        spin = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
        basis = spin @ basis
        return Transform(project_to_so3(basis), -(project_to_so3(basis) @ c))


def square_marker(
    name: str,
    side_m: float,
    periods_us=(40, 50, 64, 80, 100, 125, 160, 200),
    phase_us: int = 0,
) -> AlmConfig:
    """8-LED marker: square corners plus edge midpoints, LEDs at z=0.

    Default periods put all frequencies in the 5-25 kHz band with >= 20%
    relative separation between any two, comfortably apart for matching.
    """
    h = side_m / 2.0
    spots = [
        (-h, -h), (0.0, -h), (h, -h),
        (h, 0.0), (h, h), (0.0, h),
        (-h, h), (-h, 0.0),
    ]
    if len(periods_us) != len(spots):
        raise ValueError(f"need {len(spots)} periods, got {len(periods_us)}")
    leds = [
        LedSpec(i, (x, y, 0.0), 1e6 / p, phase_us=phase_us)
        for i, ((x, y), p) in enumerate(zip(spots, periods_us))
    ]
    return AlmConfig(name, tuple(leds))


class Trajectory:
    """Piecewise-linear marker-in-camera pose over time.

    Displacement interpolates linearly, rotation along the geodesic between
    keyframes; outside the keyframe range the pose clamps to the ends.
    """

    def __init__(self, keyframes):
        kf = sorted(keyframes, key=lambda x: x[0])
        if not kf:
            raise ValueError("trajectory needs at least one keyframe")
        self.times = np.array([t for t, _ in kf], dtype=np.int64)
        if len(set(self.times)) != len(self.times):
            raise ValueError("duplicate keyframe times")
        self.poses = [p for _, p in kf]
        # precomputed per-segment relative rotation (axis-angle)
        self._rel = [
            so3_log(self.poses[i].rotation.T @ self.poses[i + 1].rotation)
            for i in range(len(self.poses) - 1)
        ]

    @staticmethod
    def constant(pose: Transform) -> "Trajectory":
        return Trajectory([(0, pose)])

    @property
    def is_static(self) -> bool:
        return len(self.poses) == 1 or all(
            np.allclose(p.as_flat(), self.poses[0].as_flat()) for p in self.poses
        )

    def at(self, t_us: int) -> Transform:
        r, d = self._eval(np.array([t_us], dtype=np.int64))
        return Transform(project_to_so3(r[0]), d[0])

    def _eval(self, ts: np.ndarray):
        """Vectorized evaluation: (n,3,3) rotations and (n,3) displacements."""
        n = ts.shape[0]
        rot = np.empty((n, 3, 3))
        disp = np.empty((n, 3))
        if len(self.poses) == 1:
            rot[:] = self.poses[0].rotation
            disp[:] = self.poses[0].displacement
            return rot, disp
        seg = np.clip(np.searchsorted(self.times, ts, side="right") - 1, 0, len(self.poses) - 2)
        t0 = self.times[seg]
        t1 = self.times[seg + 1]
        s = np.clip((ts - t0) / (t1 - t0), 0.0, 1.0)
        for k in np.unique(seg):
            m = seg == k
            p0, p1 = self.poses[k], self.poses[k + 1]
            disp[m] = p0.displacement + s[m, None] * (p1.displacement - p0.displacement)
            rot[m] = p0.rotation @ _exp_batch(s[m, None] * self._rel[k])
        return rot, disp


def _exp_batch(w: np.ndarray) -> np.ndarray:
    """Rodrigues formula over a (n, 3) batch of axis-angle vectors."""
    n = w.shape[0]
    theta = np.linalg.norm(w, axis=1)
    out = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    nz = theta > 1e-12
    if not np.any(nz):
        return out
    axis = w[nz] / theta[nz, None]
    x, y, z = axis[:, 0], axis[:, 1], axis[:, 2]
    zeros = np.zeros_like(x)
    k = np.stack(
        [zeros, -z, y, z, zeros, -x, -y, x, zeros], axis=1
    ).reshape(-1, 3, 3)
    st = np.sin(theta[nz])[:, None, None]
    ct = (1.0 - np.cos(theta[nz]))[:, None, None]
    out[nz] += st * k + ct * (k @ k)
    return out


@dataclass(frozen=True)
class SimScene:
    """Complete description of one synthetic recording."""

    intrinsics: CameraIntrinsics
    markers: tuple  # of (AlmConfig, Trajectory)
    duration_us: int
    blob_radius_px: float = 2.0
    refractory_us: int = 0  # 0 disables per-pixel dead time
    noise_rate: float = 0.0  # background events / s / pixel
    center_jitter_px: float = 0.0  # per-blink Gaussian blur of the blob center
    contrast_threshold: float = 0.25  # log-intensity step the sensor model assumes
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "markers", tuple(self.markers))
        if self.duration_us <= 0:
            raise ValueError("duration_us must be positive")
        if self.blob_radius_px < 0.5:
            raise ValueError("blob_radius_px must be >= 0.5")
        if self.refractory_us < 0 or self.noise_rate < 0 or self.center_jitter_px < 0:
            raise ValueError("refractory_us, noise_rate, center_jitter_px must be >= 0")
        names = [alm.name for alm, _ in self.markers]
        if len(set(names)) != len(names):
            raise ValueError("duplicate marker names in scene")


def _rasterize(ts, cu, cv, radius, width, height):
    """Blob pixels for a batch of blink centers.

    A pixel fires when its integer coordinates lie within ``radius`` of the
    continuous center; the rounded center pixel always fires so a
    sub-pixel radius degenerates to exactly one event per blink.
    """
    r_int = int(np.ceil(radius)) + 1
    off = np.arange(-r_int, r_int + 1, dtype=np.int64)
    du, dv = (a.ravel() for a in np.meshgrid(off, off, indexing="ij"))
    cur = np.round(cu).astype(np.int64)
    cvr = np.round(cv).astype(np.int64)
    us = cur[:, None] + du[None, :]
    vs = cvr[:, None] + dv[None, :]
    inside = (us - cu[:, None]) ** 2 + (vs - cv[:, None]) ** 2 <= radius * radius
    inside |= (du == 0) & (dv == 0)
    inside &= (us >= 0) & (us < width) & (vs >= 0) & (vs < height)
    tb = np.broadcast_to(ts[:, None], us.shape)
    return tb[inside], us[inside], vs[inside]


def simulate_blink_events(scene: SimScene, duration_us: int | None = None) -> np.ndarray:
    """Render the scene's LED blinks into a sorted event stream.

    Events carry polarity +1 only (the sensor is assumed biased to one
    polarity).  Blink timestamps are exact integer microseconds; the
    trajectory is evaluated at each blink instant.  Ties in the final sort
    are broken on (u, v, LED id) so the output is reproducible.
    """
    duration = scene.duration_us if duration_us is None else int(duration_us)
    k = scene.intrinsics
    jitter_rng = np.random.default_rng([scene.rng_seed, _RNG_JITTER])

    t_parts, u_parts, v_parts, led_parts = [], [], [], []
    led_key = 0
    for alm, traj in scene.markers:
        for led in alm.leds:
            ts = np.arange(led.phase_us, duration, led.period_us, dtype=np.int64)
            if ts.shape[0] == 0:
                led_key += 1
                continue
            rot, disp = traj._eval(ts)
            p_cam = rot @ led.position + disp
            z = p_cam[:, 2]
            vis = z > 1e-9
            jit = (
                jitter_rng.normal(0.0, scene.center_jitter_px, size=(ts.shape[0], 2))
                if scene.center_jitter_px > 0
                else np.zeros((ts.shape[0], 2))
            )
            if not np.any(vis):
                led_key += 1
                continue
            cu = k.fx * p_cam[vis, 0] / z[vis] + k.cx + jit[vis, 0]
            cv = k.fy * p_cam[vis, 1] / z[vis] + k.cy + jit[vis, 1]
            tt, us, vs = _rasterize(
                ts[vis], cu, cv, scene.blob_radius_px, k.width, k.height
            )
            if tt.shape[0]:
                t_parts.append(tt)
                u_parts.append(us)
                v_parts.append(vs)
                led_parts.append(np.full(tt.shape[0], led_key, dtype=np.int64))
            led_key += 1

    if not t_parts:
        return ev.empty_stream()
    t = np.concatenate(t_parts)
    u = np.concatenate(u_parts)
    v = np.concatenate(v_parts)
    led = np.concatenate(led_parts)
    order = np.lexsort((led, v, u, t))
    t, u, v, led = t[order], u[order], v[order], led[order]
    if scene.refractory_us > 0:
        keep = _refractory_mask(t, u, v, scene.refractory_us, k.width)
        t, u, v = t[keep], u[keep], v[keep]
    return ev.make_stream(t, u, v, np.ones(t.shape[0], dtype=np.int8))


def _refractory_mask(t, u, v, refractory_us, width) -> np.ndarray:
    """Greedy per-pixel dead-time suppression; input sorted by t."""
    pix = v * width + u
    order = np.lexsort((t, pix))
    sp = pix[order]
    st = t[order]
    keep = np.ones(t.shape[0], dtype=bool)
    starts = np.flatnonzero(np.r_[True, sp[1:] != sp[:-1]])
    ends = np.r_[starts[1:], sp.shape[0]]
    for a, b in zip(starts, ends):
        last = st[a]
        for i in range(a + 1, b):
            if st[i] - last <= refractory_us:
                keep[order[i]] = False
            else:
                last = st[i]
    return keep


def add_noise_events(stream: np.ndarray, scene: SimScene) -> np.ndarray:
    """Merge seeded Poisson background events into a stream.

    The expected count is noise_rate * duration * pixel_count, spread
    uniformly over time and the sensor.  noise_rate = 0 returns the input
    unchanged.
    """
    if scene.noise_rate <= 0:
        return stream
    rng = np.random.default_rng([scene.rng_seed, _RNG_NOISE])
    k = scene.intrinsics
    lam = scene.noise_rate * (scene.duration_us * 1e-6) * k.width * k.height
    n = int(rng.poisson(lam))
    if n == 0:
        return stream
    t = rng.integers(0, scene.duration_us, size=n, dtype=np.int64)
    u = rng.integers(0, k.width, size=n, dtype=np.int64)
    v = rng.integers(0, k.height, size=n, dtype=np.int64)
    noise = ev.make_stream(t, u, v, np.ones(n, dtype=np.int8))
    merged = np.concatenate([stream, noise])
    order = np.lexsort((merged["v"], merged["u"], merged["t"]))
    return merged[order]


def simulate(scene: SimScene) -> np.ndarray:
    """Blink events plus background noise: the full render of a scene."""
    return add_noise_events(simulate_blink_events(scene), scene)


def synth_ground_truth(scene: SimScene, sample_period_us: int) -> dict:
    """Sample each marker's trajectory: name -> list of (t_us, Transform).

    Samples run from 0 to duration inclusive in sample_period_us steps, so
    sample_period_us == duration yields exactly the two endpoints.
    """
    if sample_period_us <= 0:
        raise ValueError("sample_period_us must be positive")
    ts = np.arange(0, scene.duration_us + 1, sample_period_us, dtype=np.int64)
    out = {}
    for alm, traj in scene.markers:
        rot, disp = traj._eval(ts)
        out[alm.name] = [
            (int(t), Transform(project_to_so3(r), d))
            for t, r, d in zip(ts, rot, disp)
        ]
    return out


# ---------------------------------------------------------------------------
# scene config files

def _intrinsics_to_dict(k: CameraIntrinsics) -> dict:
    return {
        "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
        "width": k.width, "height": k.height,
    }


def _intrinsics_from_dict(d: dict) -> CameraIntrinsics:
    return CameraIntrinsics(
        fx=float(d["fx"]), fy=float(d["fy"]),
        cx=float(d["cx"]), cy=float(d["cy"]),
        width=int(d["width"]), height=int(d["height"]),
    )


def alm_to_dict(alm: AlmConfig) -> dict:
    return {
        "name": alm.name,
        "leds": [
            {
                "id": l.led_id,
                "position": [float(x) for x in l.position],
                "period_us": l.period_us,
                "phase_us": l.phase_us,
            }
            for l in alm.leds
        ],
    }


def alm_from_dict(d: dict) -> AlmConfig:
    leds = []
    for l in d["leds"]:
        if "period_us" in l:
            freq = 1e6 / int(l["period_us"])
        else:
            freq = float(l["frequency"])
        leds.append(
            LedSpec(
                led_id=int(l["id"]),
                position=[float(x) for x in l["position"]],
                frequency=freq,
                phase_us=int(l.get("phase_us", 0)),
            )
        )
    return AlmConfig(d["name"], tuple(leds))


def scene_to_dict(scene: SimScene) -> dict:
    markers = []
    for alm, traj in scene.markers:
        markers.append(
            {
                **alm_to_dict(alm),
                "trajectory": [
                    {"t_us": int(t), "pose": [float(x) for x in p.as_flat()]}
                    for t, p in zip(traj.times, traj.poses)
                ],
            }
        )
    return {
        "seed": scene.rng_seed,
        "duration_us": scene.duration_us,
        "intrinsics": _intrinsics_to_dict(scene.intrinsics),
        "blob_radius_px": scene.blob_radius_px,
        "refractory_us": scene.refractory_us,
        "noise_rate": scene.noise_rate,
        "center_jitter_px": scene.center_jitter_px,
        "contrast_threshold": scene.contrast_threshold,
        "markers": markers,
    }


def scene_from_dict(d: dict) -> SimScene:
    markers = []
    for m in d["markers"]:
        alm = alm_from_dict(m)
        traj = Trajectory(
            [(int(kf["t_us"]), Transform.from_flat(kf["pose"])) for kf in m["trajectory"]]
        )
        markers.append((alm, traj))
    return SimScene(
        intrinsics=_intrinsics_from_dict(d["intrinsics"]),
        markers=tuple(markers),
        duration_us=int(d["duration_us"]),
        blob_radius_px=float(d.get("blob_radius_px", 2.0)),
        refractory_us=int(d.get("refractory_us", 0)),
        noise_rate=float(d.get("noise_rate", 0.0)),
        center_jitter_px=float(d.get("center_jitter_px", 0.0)),
        contrast_threshold=float(d.get("contrast_threshold", 0.25)),
        rng_seed=int(d.get("seed", 0)),
    )


def load_scene(path) -> SimScene:
    with open(path) as f:
        return scene_from_dict(yaml.safe_load(f))


def save_scene(path, scene: SimScene) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(scene_to_dict(scene), f, sort_keys=False)
