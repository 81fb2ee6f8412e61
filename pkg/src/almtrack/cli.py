"""Command-line entry points: simulate, run, metrics, bench, calibrate."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import yaml

from . import calibrate as cal
from . import events as ev
from . import pipeline as pl
from .detect import accumulate, write_pgm
from .geometry import rotation_to_quaternion
from .simulate import load_scene, simulate, synth_ground_truth


def _cmd_simulate(args) -> int:
    scene = load_scene(args.scene)
    if args.duration_us is not None:
        scene = replace(scene, duration_us=args.duration_us)
    stream = simulate(scene)
    ev.write_csv(args.out, stream)
    print(f"wrote {stream.shape[0]} events to {args.out}")
    if args.ground_truth:
        gt = synth_ground_truth(scene, args.gt_period_us)
        records = [
            pl.PoseRecord(t_us=t, name=name, pose=pose, rms_px=0.0)
            for name, samples in gt.items()
            for t, pose in samples
        ]
        records.sort(key=lambda r: (r.t_us, r.name))
        pl.write_pose_csv(args.ground_truth, records)
        print(f"wrote {len(records)} ground-truth poses to {args.ground_truth}")
    return 0


def _cmd_run(args) -> int:
    config = pl.load_pipeline(args.config)
    stream = ev.read_csv(args.events)
    if args.debug_image:
        k = config.intrinsics
        img = accumulate(
            stream, 0, config.detect.resolved_window_us, k.width, k.height,
            config.detect.f_min,
        )
        write_pgm(img, args.debug_image)
        print(f"wrote first-window count image to {args.debug_image}")
    records = pl.run_pipeline(config, stream)
    pl.write_pose_csv(args.out, records)
    n_lost = sum(r.lost for r in records)
    print(f"wrote {len(records)} poses ({n_lost} lost) to {args.out}")
    return 0


def _cmd_metrics(args) -> int:
    records = pl.read_pose_csv(args.poses)
    truth_records = pl.read_pose_csv(args.truth)
    truth = {}
    for r in truth_records:
        truth.setdefault(r.name, []).append((r.t_us, r.pose))
    report = pl.compute_metrics(records, truth, skip_lost=not args.include_lost)
    if args.out:
        pl.write_metrics_csv(args.out, report)
        print(f"wrote per-pose metrics to {args.out}")
    print(yaml.safe_dump(report.summary(), sort_keys=False).strip())
    return 0


def _cmd_bench(args) -> int:
    config = pl.load_pipeline(args.config)
    stream = ev.read_csv(args.events)
    report = pl.measure_throughput(config, stream, replay_speed=args.speed)
    print(f"mode:               {config.mode}")
    print(f"replay speed:       {report.replay_speed}")
    print(f"poses emitted:      {len(report.records)}")
    print(f"pose rate:          {report.pose_rate_hz:.1f} Hz")
    print(f"latency mean:       {report.latency_mean_us:.1f} us")
    print(f"latency max:        {report.latency_max_us:.1f} us")
    print(f"detection windows:  {report.n_detection_windows}")
    print(f"detection rate:     {report.detection_rate_hz:.1f} Hz")
    if args.out:
        pl.write_pose_csv(args.out, report.records)
        print(f"wrote poses to {args.out}")
    return 0


def _cmd_calibrate(args) -> int:
    measurements = cal.read_measurements_csv(args.measurements)
    sol = cal.solve_hidden_transforms(measurements, w=args.weight)
    cal.save_report(args.out, sol)
    q = rotation_to_quaternion(sol.cam_offset.rotation)
    print(f"solved {len(measurements)} measurements, {sol.n_markers} marker(s)")
    print(f"final cost:  {sol.final_cost:.6e}")
    print(f"iterations:  {sol.iterations}")
    print(f"camera offset quaternion (w,x,y,z): "
          f"{q[0]:.6f} {q[1]:.6f} {q[2]:.6f} {q[3]:.6f}")
    if sol.diversity_warning:
        print("warning: low rotational diversity; solution may be unobservable")
    print(f"wrote report to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="almtrack",
        description="Blinking-LED marker tracking for event cameras",
    )
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="render a scene config into an event CSV")
    s.add_argument("--scene", required=True, help="scene YAML")
    s.add_argument("--out", required=True, help="output event CSV (t_us,u,v,p)")
    s.add_argument("--ground-truth", help="also write ground-truth poses here")
    s.add_argument("--gt-period-us", type=int, default=500,
                   help="ground-truth sampling period (default 500)")
    s.add_argument("--duration-us", type=int, default=None,
                   help="override the scene duration")
    s.set_defaults(fn=_cmd_simulate)

    s = sub.add_parser("run", help="run the pipeline on an event CSV")
    s.add_argument("--config", required=True, help="pipeline YAML")
    s.add_argument("--events", required=True, help="event CSV")
    s.add_argument("--out", required=True, help="output pose CSV")
    s.add_argument("--debug-image", help="dump the first detection window as PGM")
    s.set_defaults(fn=_cmd_run)

    s = sub.add_parser("metrics", help="compare a pose log against ground truth")
    s.add_argument("--poses", required=True, help="pose CSV from 'run'")
    s.add_argument("--truth", required=True, help="ground-truth pose CSV")
    s.add_argument("--out", help="write per-pose metrics CSV here")
    s.add_argument("--include-lost", action="store_true",
                   help="score poses flagged as lost too")
    s.set_defaults(fn=_cmd_metrics)

    s = sub.add_parser("bench", help="replay a stream and measure rates/latency")
    s.add_argument("--config", required=True, help="pipeline YAML")
    s.add_argument("--events", required=True, help="event CSV")
    s.add_argument("--speed", type=float, default=1.0,
                   help="replay speed (1 = real time, 0 = all data at once)")
    s.add_argument("--out", help="write the emitted poses here")
    s.set_defaults(fn=_cmd_bench)

    s = sub.add_parser("calibrate", help="solve hidden mocap-to-camera transforms")
    s.add_argument("--measurements", required=True, help="measurement CSV")
    s.add_argument("--out", required=True, help="output report YAML")
    s.add_argument("--weight", type=float, default=cal.ROTATION_WEIGHT,
                   help="rotation residual weight (default 0.1)")
    s.set_defaults(fn=_cmd_calibrate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
