"""Pose tracking of blinking-LED markers seen by an event camera.

The pipeline: accumulate events into count images, detect LEDs as bright
regions and identify them by blink frequency, track each LED with an
exponential moving average, and solve the marker pose from the tracked
centers through a planar homography decomposition.  A separate calibration
module aligns the camera against a motion-capture system.
"""

from .calibrate import (
    CalibMeasurement,
    CalibSolution,
    calibration_cost,
    solve_hidden_transforms,
    synthesize_measurements,
)
from .detect import (
    CandidateRegion,
    CountImage,
    DetectedMarker,
    FrequencyEstimate,
    LedSeed,
    accumulate,
    detect_markers,
    estimate_frequency,
    find_candidates,
    match_marker,
)
from .events import EVENT_DTYPE, make_stream, read_csv, slice_time, write_csv
from .geometry import (
    CameraIntrinsics,
    PointBehindCamera,
    PoseError,
    Transform,
    pose_error,
    project,
    rotation_angle_deg,
)
from .pipeline import (
    BoardLayout,
    DetectConfig,
    MetricsReport,
    PipelineConfig,
    PoseConfig,
    PoseRecord,
    ThroughputReport,
    TrackConfig,
    compute_metrics,
    load_pipeline,
    measure_throughput,
    read_pose_csv,
    run_pipeline,
    save_pipeline,
    write_pose_csv,
)
from .pose import (
    Correspondence,
    DegenerateGeometry,
    InvalidPose,
    PoseSolution,
    check_tracking_lost,
    estimate_homography,
    ippe_pose,
    refine_pose,
    solve_pose,
)
from .simulate import (
    AlmConfig,
    LedSpec,
    SimScene,
    Trajectory,
    load_scene,
    save_scene,
    simulate,
    square_marker,
    synth_ground_truth,
)
from .track import Tracker, feed, route_events, spawn_trackers, step

__version__ = "0.1.0"

__all__ = [
    "AlmConfig",
    "BoardLayout",
    "CalibMeasurement",
    "CalibSolution",
    "CameraIntrinsics",
    "CandidateRegion",
    "Correspondence",
    "CountImage",
    "DegenerateGeometry",
    "DetectConfig",
    "DetectedMarker",
    "EVENT_DTYPE",
    "FrequencyEstimate",
    "InvalidPose",
    "LedSeed",
    "LedSpec",
    "MetricsReport",
    "PipelineConfig",
    "PointBehindCamera",
    "PoseConfig",
    "PoseError",
    "PoseRecord",
    "PoseSolution",
    "SimScene",
    "ThroughputReport",
    "TrackConfig",
    "Tracker",
    "Trajectory",
    "Transform",
    "accumulate",
    "calibration_cost",
    "check_tracking_lost",
    "compute_metrics",
    "detect_markers",
    "estimate_frequency",
    "estimate_homography",
    "feed",
    "find_candidates",
    "ippe_pose",
    "load_pipeline",
    "load_scene",
    "make_stream",
    "match_marker",
    "measure_throughput",
    "pose_error",
    "project",
    "read_csv",
    "read_pose_csv",
    "refine_pose",
    "rotation_angle_deg",
    "route_events",
    "run_pipeline",
    "save_pipeline",
    "save_scene",
    "simulate",
    "slice_time",
    "solve_hidden_transforms",
    "solve_pose",
    "spawn_trackers",
    "square_marker",
    "step",
    "synth_ground_truth",
    "synthesize_measurements",
    "write_csv",
    "write_pose_csv",
]
