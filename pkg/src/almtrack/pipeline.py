"""End-to-end tracking: detection, per-LED trackers, pose solving, metrics.

Two execution modes share all stage code:

* the deterministic stepped mode processes the stream window by window and
  solves at fixed boundaries, so a stream and a configuration always produce
  the same pose log, bit for bit;
* the free-running mode replays the stream against the wall clock and
  measures what a live system would do: each stage keeps its own virtual
  clock, advanced by the actually measured compute time of its work, the
  detector skips to the newest complete window when it falls behind, and the
  solver runs back-to-back on whatever the trackers have seen.  Latency and
  rate numbers come out of this replay.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np
import yaml

from . import events as ev
from .detect import accumulate, detect_markers
from .geometry import CameraIntrinsics, Transform, pose_error, project_to_so3
from .pose import (
    Correspondence,
    DegenerateGeometry,
    InvalidPose,
    solve_pose,
)
from .simulate import AlmConfig, Trajectory, _intrinsics_from_dict, _intrinsics_to_dict, alm_from_dict, alm_to_dict
from .track import feed, route_events, spawn_trackers

PLANE_TOL = 1e-9


@dataclass(frozen=True)
class DetectConfig:
    f_min: float = 4000.0  # slowest LED frequency the detector must reject
    window_us: int | None = None  # None: two periods of f_min
    min_area: int = 3
    match_tol: float = 0.01  # relative frequency tolerance for LED matching

    def __post_init__(self):
        if self.f_min <= 0:
            raise ValueError("f_min must be positive")
        if self.window_us is not None and self.window_us < 2e6 / self.f_min:
            raise ValueError(
                "detection window must cover two periods of the slowest LED"
            )

    @property
    def resolved_window_us(self) -> int:
        if self.window_us is not None:
            return int(self.window_us)
        return int(math.ceil(2e6 / self.f_min))


@dataclass(frozen=True)
class TrackConfig:
    beta: float = 0.02  # EMA weight of a single event
    radius_update_events: int = 32
    starvation_periods: float = 5.0  # blink periods without events before a tracker is starved

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must be in (0, 1]")
        if self.radius_update_events < 1:
            raise ValueError("radius_update_events must be >= 1")
        if self.starvation_periods <= 0:
            raise ValueError("starvation_periods must be positive")


@dataclass(frozen=True)
class PoseConfig:
    solve_period_us: int = 500
    refine: bool = True

    def __post_init__(self):
        if self.solve_period_us <= 0:
            raise ValueError("solve_period_us must be positive")


@dataclass(frozen=True)
class BoardLayout:
    """Several markers rigidly mounted on one object, solved as one unit.

    Members are (marker_name, marker-frame-to-board-frame transform); the
    pooled LEDs must still be coplanar, since the solver is planar."""

    name: str
    members: tuple  # of (str, Transform)

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ValueError(f"board {self.name!r} has no members")
        names = [m for m, _ in self.members]
        if len(set(names)) != len(names):
            raise ValueError(f"board {self.name!r} lists a member twice")


@dataclass(frozen=True)
class SolveUnit:
    """One pose-solvable object: a lone marker or a whole board."""

    name: str
    member_names: tuple  # marker names
    plane_points: tuple  # per member: (n_leds, 2) plane coordinates, LED-id order
    # unit frame -> fitted plane frame; the solver reports plane-frame poses,
    # so the unit pose is H_C_plane composed with this transform
    frame_to_plane: Transform


def _fit_plane_frame(points: np.ndarray) -> Transform:
    """Frame in which the given points lie at z=0.

    Identity when they already do; otherwise a deterministic SVD basis with
    the x axis pointing toward the first point.  Raises when the points are
    not coplanar."""
    pts = np.asarray(points, dtype=float)
    c = pts.mean(axis=0)
    svals = np.linalg.svd(pts - c, compute_uv=False)
    if svals[2] > PLANE_TOL:
        raise ValueError(f"points deviate {svals[2]:.2e} m from a plane")
    if np.max(np.abs(pts[:, 2])) <= PLANE_TOL:
        return Transform.identity()
    _, _, vt = np.linalg.svd(pts - c)
    basis = vt
    if np.linalg.det(basis) < 0:
        basis = basis * np.array([[1.0], [1.0], [-1.0]])
    x_dir = basis[:2] @ (pts[0] - c)
    ang = np.arctan2(x_dir[1], x_dir[0])
    ca, sa = np.cos(-ang), np.sin(-ang)
    spin = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    basis = project_to_so3(spin @ basis)
    return Transform(basis, -(basis @ c))


def _build_units(alms, boards):
    by_name = {a.name: a for a in alms}
    in_board = {m for b in boards for m, _ in b.members}
    units = []
    for alm in alms:
        if alm.name in in_board:
            continue
        f = _fit_plane_frame(alm.positions())
        plane_pts = f.apply(alm.positions())[:, :2]
        units.append(
            SolveUnit(
                name=alm.name,
                member_names=(alm.name,),
                plane_points=(plane_pts,),
                frame_to_plane=f,
            )
        )
    for board in boards:
        pooled = []
        for member, offset in board.members:
            pooled.append(offset.apply(by_name[member].positions()))
        all_pts = np.concatenate(pooled)
        try:
            f = _fit_plane_frame(all_pts)
        except ValueError as e:
            raise ValueError(f"board {board.name!r}: {e}") from e
        units.append(
            SolveUnit(
                name=board.name,
                member_names=tuple(m for m, _ in board.members),
                plane_points=tuple(f.apply(p)[:, :2] for p in pooled),
                frame_to_plane=f,
            )
        )
    return tuple(units)


@dataclass(frozen=True)
class PipelineConfig:
    intrinsics: CameraIntrinsics
    alms: tuple  # of AlmConfig
    boards: tuple = ()  # of BoardLayout
    detect: DetectConfig = DetectConfig()
    track: TrackConfig = TrackConfig()
    pose: PoseConfig = PoseConfig()
    mode: str = "tracking"  # "tracking" or "detection"

    def __post_init__(self):
        object.__setattr__(self, "alms", tuple(self.alms))
        object.__setattr__(self, "boards", tuple(self.boards))
        if not self.alms:
            raise ValueError("pipeline needs at least one marker")
        if self.mode not in ("tracking", "detection"):
            raise ValueError("mode must be 'tracking' or 'detection'")
        names = [a.name for a in self.alms]
        if len(set(names)) != len(names):
            raise ValueError("duplicate marker names")
        # detection thresholds on count > window * f_min, so every LED must
        # blink strictly faster than f_min
        for alm in self.alms:
            for led in alm.leds:
                if led.frequency <= self.detect.f_min:
                    raise ValueError(
                        f"marker {alm.name!r} LED {led.led_id} at "
                        f"{led.frequency:.0f} Hz is not above f_min="
                        f"{self.detect.f_min:.0f} Hz"
                    )
        # matching needs disjoint acceptance intervals across the registry
        tol = self.detect.match_tol
        freqs = sorted(
            (led.frequency, alm.name, led.led_id)
            for alm in self.alms
            for led in alm.leds
        )
        for (fa, na, ia), (fb, nb, ib) in zip(freqs, freqs[1:]):
            if fa * (1 + tol) >= fb * (1 - tol):
                raise ValueError(
                    f"LED frequencies {fa:.0f} Hz ({na}/{ia}) and {fb:.0f} Hz "
                    f"({nb}/{ib}) are ambiguous at match tolerance {tol}"
                )
        board_names = [b.name for b in self.boards]
        if len(set(board_names)) != len(board_names):
            raise ValueError("duplicate board names")
        if set(board_names) & set(names):
            raise ValueError("board names must not collide with marker names")
        seen = set()
        for b in self.boards:
            for m, _ in b.members:
                if m not in set(names):
                    raise ValueError(f"board {b.name!r} references unknown marker {m!r}")
                if m in seen:
                    raise ValueError(f"marker {m!r} belongs to more than one board")
                seen.add(m)
        object.__setattr__(self, "_units", _build_units(self.alms, self.boards))

    @property
    def units(self) -> tuple:
        return self._units


@dataclass(frozen=True)
class PoseRecord:
    t_us: int
    name: str  # solve unit (marker or board) name
    pose: Transform  # unit frame in the camera optical frame
    rms_px: float
    lost: bool = False
    latency_us: float | None = None  # only set by the free-running replay


POSE_CSV_HEADER = (
    "t_us,marker_id,r00,r01,r02,r10,r11,r12,r20,r21,r22,dx,dy,dz,rms_px,lost"
)


def write_pose_csv(path, records) -> None:
    """Pose log rows; floats are written with repr so that identical runs
    produce byte-identical files."""
    with open(path, "w") as f:
        f.write(POSE_CSV_HEADER + "\n")
        for r in records:
            vals = [str(r.t_us), r.name]
            vals += [repr(float(x)) for x in r.pose.as_flat()]
            vals.append(repr(float(r.rms_px)))
            vals.append(str(int(r.lost)))
            f.write(",".join(vals) + "\n")


def read_pose_csv(path) -> list:
    out = []
    with open(path) as f:
        header = f.readline().strip()
        if header != POSE_CSV_HEADER:
            raise ValueError(f"unexpected pose log header: {header!r}")
        for line in f:
            parts = line.strip().split(",")
            if len(parts) != 16:
                raise ValueError(f"malformed pose log row: {line!r}")
            out.append(
                PoseRecord(
                    t_us=int(parts[0]),
                    name=parts[1],
                    pose=Transform.from_flat([float(x) for x in parts[2:14]]),
                    rms_px=float(parts[14]),
                    lost=bool(int(parts[15])),
                )
            )
    return out


class _EngineState:
    """Mutable per-run state: live trackers per marker plus bookkeeping."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.trackers = {a.name: None for a in config.alms}  # name -> list | None
        self.last_pose = {}  # unit name -> Transform

    def live_members(self, unit: SolveUnit):
        return [
            (i, name)
            for i, name in enumerate(unit.member_names)
            if self.trackers[name] is not None
        ]

    def any_live(self) -> bool:
        return any(v is not None for v in self.trackers.values())

    def spawn(self, detected):
        for marker in detected:
            if self.trackers[marker.name] is None:
                self.trackers[marker.name] = spawn_trackers(marker)

    def feed_events(self, batch) -> None:
        """Route one micro-batch into the live trackers.

        Capture discs are evaluated at batch-start centers; within the
        batch each tracker applies its events in exact arrival order.
        Events older than a tracker's spawn point (possible in the
        free-running replay when the consumer lags behind detection) are
        stale and dropped."""
        if batch.shape[0] == 0 or not self.any_live():
            return
        live = [tr for trs in self.trackers.values() if trs for tr in trs]
        pix = np.column_stack([batch["u"], batch["v"]]).astype(float)
        assign = route_events(pix, live)
        cfg = self.config.track
        for idx, tr in enumerate(live):
            m = assign == idx
            if tr.events_total == 0:
                m &= batch["t"] >= tr.last_event_t
            if np.any(m):
                feed(tr, pix[m], batch["t"][m], beta=cfg.beta,
                     n_radius=cfg.radius_update_events)

    def solve_unit(self, unit: SolveUnit, t_us: int):
        """Solve one unit from current tracker centers; returns a PoseRecord
        or None, applying the lost rule and tearing down lost members."""
        cfg = self.config
        live = self.live_members(unit)
        if not live:
            return None
        trackers = []
        spans = []  # (member index, start, end) into the pooled arrays
        obj = []
        for i, name in live:
            trs = self.trackers[name]
            spans.append((name, len(trackers), len(trackers) + len(trs)))
            trackers.extend(trs)
            obj.append(unit.plane_points[i])
        if len(trackers) < 4:
            return None
        obj2 = np.concatenate(obj)
        corrs = [
            Correspondence(obj2[j], trackers[j].center, trackers[j].led_id)
            for j in range(len(trackers))
        ]
        try:
            sol = solve_pose(corrs, cfg.intrinsics, refine=cfg.pose.refine)
        except (DegenerateGeometry, InvalidPose):
            # unsolvable geometry from collapsed trackers: treat as lost
            for name, _, _ in spans:
                self.trackers[name] = None
            pose = self.last_pose.get(unit.name, Transform.identity())
            return PoseRecord(t_us=t_us, name=unit.name, pose=pose,
                              rms_px=float("inf"), lost=True)
        lost_members = []
        sp = cfg.track.starvation_periods
        for name, a, b in spans:
            trs = self.trackers[name]
            errs = sol.per_point_errors[a:b]
            member_lost = any(
                e > tr.mean_event_distance for e, tr in zip(errs, trs)
            ) or any(tr.is_starved(t_us, sp) for tr in trs)
            if member_lost:
                lost_members.append(name)
        unit_pose = sol.pose.compose(unit.frame_to_plane)
        self.last_pose[unit.name] = unit_pose
        for name in lost_members:
            self.trackers[name] = None
        return PoseRecord(
            t_us=t_us,
            name=unit.name,
            pose=unit_pose,
            rms_px=sol.reprojection_rms,
            lost=bool(lost_members),
        )


def _detection_records(config, markers, t_us):
    """Detection-only solves straight from the window's LED seeds."""
    by_name = {m.name: m for m in markers}
    out = []
    for unit in config.units:
        obj = []
        img = []
        for i, name in enumerate(unit.member_names):
            m = by_name.get(name)
            if m is None:
                continue
            pts = unit.plane_points[i]
            for j, seed in enumerate(m.led_seeds):
                obj.append(pts[j])
                img.append(seed.center)
        if len(obj) < 4:
            continue
        corrs = [Correspondence(o, c) for o, c in zip(obj, img)]
        try:
            sol = solve_pose(corrs, config.intrinsics, refine=config.pose.refine)
        except (DegenerateGeometry, InvalidPose):
            continue
        out.append(
            PoseRecord(
                t_us=t_us,
                name=unit.name,
                pose=sol.pose.compose(unit.frame_to_plane),
                rms_px=sol.reprojection_rms,
            )
        )
    return out


def run_pipeline(config: PipelineConfig, stream: np.ndarray) -> list:
    """Deterministic stepped execution; returns the pose log.

    The stream is cut into detection windows of fixed length.  In tracking
    mode, events are fed to the live trackers and poses are solved at every
    multiple of the solve period (events strictly before a boundary are
    consumed before solving at it); at each window end, detection output
    spawns trackers for markers that are not currently live.  A lost marker
    is recorded once, with the lost flag set, and its trackers are torn
    down; it returns when detection sees all its LEDs again.
    """
    ev.check_sorted(stream)
    if stream.shape[0] == 0:
        return []
    k = config.intrinsics
    t_d = config.detect.resolved_window_us
    sp = config.pose.solve_period_us
    state = _EngineState(config)
    records = []
    t_end = int(stream["t"][-1]) + 1
    n_win = (t_end + t_d - 1) // t_d
    ts = stream["t"]
    consumed = 0

    def feed_to(t_bound):
        nonlocal consumed
        j = int(np.searchsorted(ts, t_bound, side="left"))
        state.feed_events(stream[consumed:j])
        consumed = j

    for w in range(n_win):
        w0, w1 = w * t_d, (w + 1) * t_d
        if config.mode == "tracking":
            first = (w0 // sp + 1) * sp
            for s in range(first, w1 + 1, sp):
                feed_to(s)
                for unit in config.units:
                    rec = state.solve_unit(unit, s)
                    if rec is not None:
                        records.append(rec)
            feed_to(w1)
        win = ev.slice_time(stream, w0, w1)
        img = accumulate(win, w0, t_d, k.width, k.height, config.detect.f_min)
        markers = detect_markers(
            img, win, config.alms, config.detect.f_min,
            min_area=config.detect.min_area, tol=config.detect.match_tol,
        )
        if config.mode == "tracking":
            state.spawn(markers)
        else:
            records.extend(_detection_records(config, markers, w1))
    return records


# ---------------------------------------------------------------------------
# free-running replay

@dataclass(frozen=True)
class ThroughputReport:
    records: tuple  # PoseRecords with latency_us set
    replay_speed: float
    pose_rate_hz: float  # emission rate over the replay wall clock
    latency_mean_us: float
    latency_max_us: float
    detection_rate_hz: float  # detection windows processed per wall second
    n_detection_windows: int


def _rate_hz(avail_times) -> float:
    if len(avail_times) < 2:
        return 0.0
    span = avail_times[-1] - avail_times[0]
    if span <= 0:
        return 0.0
    return (len(avail_times) - 1) / span * 1e6


def _run_detector_replay(config, stream, speed, t_end):
    """Detector stage against its own virtual clock.

    Returns (messages, detection availability times).  Each message is
    (avail_wall_us, detected markers, window end).  With speed > 0 the
    detector waits for a window to complete and, when it falls behind,
    skips to the newest complete window; with speed == 0 the whole stream
    is treated as already recorded and every window is processed
    back-to-back."""
    k = config.intrinsics
    t_d = config.detect.resolved_window_us
    n_win = (t_end + t_d - 1) // t_d
    clock = 0.0
    msgs = []
    avails = []
    w = 0
    while w < n_win:
        w0, w1 = w * t_d, (w + 1) * t_d
        if speed > 0:
            clock = max(clock, w1 / speed)
        tic = time.perf_counter()
        win = ev.slice_time(stream, w0, w1)
        img = accumulate(win, w0, t_d, k.width, k.height, config.detect.f_min)
        markers = detect_markers(
            img, win, config.alms, config.detect.f_min,
            min_area=config.detect.min_area, tol=config.detect.match_tol,
        )
        clock += (time.perf_counter() - tic) * 1e6
        msgs.append((clock, markers, w1))
        avails.append(clock)
        if speed > 0:
            newest_complete = int(clock * speed) // t_d - 1
            w = max(w + 1, newest_complete)
        else:
            w += 1
    return msgs, avails


def measure_throughput(config: PipelineConfig, stream: np.ndarray,
                       replay_speed: float = 1.0) -> ThroughputReport:
    """Replay the stream as a live system and measure rates and latency.

    Per-pose latency is the pose's wall-clock availability minus the wall
    arrival time of the newest event it consumed.  replay_speed scales
    stream time to wall time (1.0 = real time); 0 treats the whole stream
    as already recorded, which benchmarks pure compute.
    """
    ev.check_sorted(stream)
    if replay_speed < 0:
        raise ValueError("replay_speed must be >= 0")
    if stream.shape[0] == 0:
        return ThroughputReport(
            records=(), replay_speed=replay_speed, pose_rate_hz=0.0,
            latency_mean_us=0.0, latency_max_us=0.0, detection_rate_hz=0.0,
            n_detection_windows=0,
        )
    t_end = int(stream["t"][-1]) + 1
    msgs, det_avails = _run_detector_replay(config, stream, replay_speed, t_end)

    def wall(t_stream: float) -> float:
        return t_stream / replay_speed if replay_speed > 0 else 0.0

    records = []
    pose_avails = []
    if config.mode == "detection":
        for avail, markers, w1 in msgs:
            win = ev.slice_time(stream, w1 - config.detect.resolved_window_us, w1)
            newest = int(win["t"][-1]) if win.shape[0] else w1
            for rec in _detection_records(config, markers, w1):
                records.append(replace(rec, latency_us=avail - wall(newest)))
                pose_avails.append(avail)
    else:
        state = _EngineState(config)
        ts = stream["t"]
        consumed = 0
        msg_idx = 0
        clock = msgs[0][0] if msgs else 0.0
        newest_fed = None
        while True:
            while msg_idx < len(msgs) and msgs[msg_idx][0] <= clock:
                state.spawn(msgs[msg_idx][1])
                msg_idx += 1
            if not state.any_live():
                if msg_idx >= len(msgs):
                    break
                clock = max(clock, msgs[msg_idx][0])
                continue
            stream_now = t_end if replay_speed == 0 else min(
                t_end, int(clock * replay_speed)
            )
            j = int(np.searchsorted(ts, stream_now, side="left"))
            tic = time.perf_counter()
            if j > consumed:
                state.feed_events(stream[consumed:j])
                newest_fed = int(ts[j - 1])
                consumed = j
            elif stream_now < t_end:
                # no new events yet: idle until the next one arrives, or to
                # the end of the stream when it has gone quiet for good
                if consumed < ts.shape[0]:
                    clock = max(clock, wall(float(ts[consumed]) + 1.0))
                else:
                    clock = max(clock, wall(float(t_end)))
                continue
            solved = []
            for unit in config.units:
                rec = state.solve_unit(unit, stream_now)
                if rec is not None:
                    solved.append(rec)
            clock += (time.perf_counter() - tic) * 1e6
            ref = newest_fed if newest_fed is not None else stream_now
            for rec in solved:
                records.append(replace(rec, latency_us=clock - wall(ref)))
                pose_avails.append(clock)
            if stream_now >= t_end:
                break
    lat = [r.latency_us for r in records if r.latency_us is not None]
    return ThroughputReport(
        records=tuple(records),
        replay_speed=replay_speed,
        pose_rate_hz=_rate_hz(sorted(pose_avails)),
        latency_mean_us=float(np.mean(lat)) if lat else 0.0,
        latency_max_us=float(np.max(lat)) if lat else 0.0,
        detection_rate_hz=_rate_hz(det_avails),
        n_detection_windows=len(det_avails),
    )


# ---------------------------------------------------------------------------
# metrics

@dataclass(frozen=True)
class MetricsReport:
    names: tuple
    t_us: np.ndarray
    translation_error_m: np.ndarray  # |d_gt - d_est| per pose
    orientation_error_deg: np.ndarray
    relative_translation: np.ndarray  # translation error / ground-truth distance
    distance_m: np.ndarray  # ground-truth distance per pose
    n_skipped_lost: int
    n_missing_truth: int

    def summary(self) -> dict:
        if self.t_us.shape[0] == 0:
            return {"n_poses": 0, "n_skipped_lost": self.n_skipped_lost,
                    "n_missing_truth": self.n_missing_truth}
        return {
            "n_poses": int(self.t_us.shape[0]),
            "translation_mean_m": float(np.mean(self.translation_error_m)),
            "translation_max_m": float(np.max(self.translation_error_m)),
            "orientation_mean_deg": float(np.mean(self.orientation_error_deg)),
            "orientation_max_deg": float(np.max(self.orientation_error_deg)),
            "relative_translation_mean": float(np.mean(self.relative_translation)),
            "relative_translation_max": float(np.max(self.relative_translation)),
            "n_skipped_lost": self.n_skipped_lost,
            "n_missing_truth": self.n_missing_truth,
        }


def compute_metrics(records, ground_truth, skip_lost: bool = True) -> MetricsReport:
    """Compare a pose log against ground truth.

    ground_truth maps unit names to [(t_us, Transform), ...] samples; poses
    between samples are compared against the interpolated trajectory.  Lost
    poses are skipped by default, and records without ground truth are
    counted but otherwise ignored.
    """
    trajs = {name: Trajectory(samples) for name, samples in ground_truth.items()}
    names, t_list, te, oe, rel, dist = [], [], [], [], [], []
    skipped = 0
    missing = 0
    for rec in records:
        if rec.lost and skip_lost:
            skipped += 1
            continue
        traj = trajs.get(rec.name)
        if traj is None:
            missing += 1
            continue
        truth = traj.at(rec.t_us)
        err = pose_error(rec.pose, truth)
        d = float(np.linalg.norm(truth.displacement))
        names.append(rec.name)
        t_list.append(rec.t_us)
        te.append(err.translation_norm)
        oe.append(err.orientation_error_deg)
        rel.append(err.translation_norm / d if d > 0 else np.inf)
        dist.append(d)
    return MetricsReport(
        names=tuple(names),
        t_us=np.array(t_list, dtype=np.int64),
        translation_error_m=np.array(te),
        orientation_error_deg=np.array(oe),
        relative_translation=np.array(rel),
        distance_m=np.array(dist),
        n_skipped_lost=skipped,
        n_missing_truth=missing,
    )


METRICS_CSV_HEADER = (
    "t_us,marker_id,translation_error_m,orientation_error_deg,"
    "relative_translation,distance_m"
)


def write_metrics_csv(path, report: MetricsReport) -> None:
    with open(path, "w") as f:
        f.write(METRICS_CSV_HEADER + "\n")
        for i in range(report.t_us.shape[0]):
            f.write(
                f"{report.t_us[i]},{report.names[i]},"
                f"{report.translation_error_m[i]!r},"
                f"{report.orientation_error_deg[i]!r},"
                f"{report.relative_translation[i]!r},"
                f"{report.distance_m[i]!r}\n"
            )


# ---------------------------------------------------------------------------
# pipeline config files

def pipeline_to_dict(config: PipelineConfig) -> dict:
    return {
        "mode": config.mode,
        "intrinsics": _intrinsics_to_dict(config.intrinsics),
        "markers": [alm_to_dict(a) for a in config.alms],
        "boards": [
            {
                "name": b.name,
                "members": [
                    {"marker": m, "offset": [float(x) for x in t.as_flat()]}
                    for m, t in b.members
                ],
            }
            for b in config.boards
        ],
        "detect": {
            "f_min": config.detect.f_min,
            "window_us": config.detect.window_us,
            "min_area": config.detect.min_area,
            "match_tol": config.detect.match_tol,
        },
        "track": {
            "beta": config.track.beta,
            "radius_update_events": config.track.radius_update_events,
            "starvation_periods": config.track.starvation_periods,
        },
        "pose": {
            "solve_period_us": config.pose.solve_period_us,
            "refine": config.pose.refine,
        },
    }


def pipeline_from_dict(d: dict) -> PipelineConfig:
    det = d.get("detect", {})
    trk = d.get("track", {})
    pos = d.get("pose", {})
    boards = []
    for b in d.get("boards", []):
        boards.append(
            BoardLayout(
                name=b["name"],
                members=tuple(
                    (m["marker"], Transform.from_flat(m["offset"]))
                    for m in b["members"]
                ),
            )
        )
    return PipelineConfig(
        intrinsics=_intrinsics_from_dict(d["intrinsics"]),
        alms=tuple(alm_from_dict(m) for m in d["markers"]),
        boards=tuple(boards),
        detect=DetectConfig(
            f_min=float(det.get("f_min", 4000.0)),
            window_us=det.get("window_us"),
            min_area=int(det.get("min_area", 3)),
            match_tol=float(det.get("match_tol", 0.01)),
        ),
        track=TrackConfig(
            beta=float(trk.get("beta", 0.02)),
            radius_update_events=int(trk.get("radius_update_events", 32)),
            starvation_periods=float(trk.get("starvation_periods", 5.0)),
        ),
        pose=PoseConfig(
            solve_period_us=int(pos.get("solve_period_us", 500)),
            refine=bool(pos.get("refine", True)),
        ),
        mode=d.get("mode", "tracking"),
    )


def load_pipeline(path) -> PipelineConfig:
    with open(path) as f:
        return pipeline_from_dict(yaml.safe_load(f))


def save_pipeline(path, config: PipelineConfig) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(pipeline_to_dict(config), f, sort_keys=False)
