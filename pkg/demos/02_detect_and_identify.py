"""Detect LED blobs in a count image and identify them by blink frequency.

Walks the detection stage by hand on one window of a static scene: event
counts per pixel, thresholding and connected components, per-region
interval histograms, and finally the frequency-to-LED matching that turns
anonymous blobs into a detected marker.  The count image is dumped as a
PGM for inspection.
"""

from pathlib import Path

import numpy as np

from almtrack import (
    CameraIntrinsics,
    SimScene,
    Trajectory,
    Transform,
    accumulate,
    detect_markers,
    estimate_frequency,
    find_candidates,
    match_marker,
    project,
    simulate,
    square_marker,
)
from almtrack.detect import write_pgm

OUT = Path(__file__).parent / "out"
F_MIN = 4000.0  # slowest frequency the detector should keep


def main():
    k = CameraIntrinsics(fx=1200.0, fy=1200.0, cx=320.0, cy=240.0,
                         width=640, height=480)
    marker = square_marker("alm0", side_m=0.09)
    pose = Transform(np.eye(3), [0.0213, -0.0117, 1.497])
    scene = SimScene(intrinsics=k, markers=((marker, Trajectory.constant(pose)),),
                     duration_us=1000, noise_rate=0.05, rng_seed=5)
    stream = simulate(scene)

    # one detection window: two periods of the slowest admissible LED
    window_us = int(np.ceil(2e6 / F_MIN))
    img = accumulate(stream, 0, window_us, k.width, k.height, F_MIN)
    print(f"count image over [0, {window_us}) us: "
          f"{int(img.counts.sum())} events, peak pixel {int(img.counts.max())}")

    # pixels survive only when their count exceeds window * f_min
    cands = find_candidates(img, F_MIN)
    print(f"{len(cands)} candidate regions above the count threshold")

    for i, c in enumerate(cands):
        # pool the window's events over the region's pixels and histogram
        # the per-pixel intervals; the peak bin is the blink period
        flat = stream["v"].astype(np.int64) * k.width + stream["u"]
        region = stream[np.isin(flat, c.pixel_flat)]
        est = estimate_frequency(region)
        print(f"  region {i}: centroid ({c.centroid[0]:7.2f}, {c.centroid[1]:7.2f})"
              f"  area {c.area:2d}  period {est.peak_us} us"
              f"  -> {est.frequency:7.1f} Hz"
              f"  (peak fraction {est.peak_fraction:.2f})")

    # frequencies map regions onto the marker's LED registry
    flat = stream["v"].astype(np.int64) * k.width + stream["u"]
    measured = [
        (c, estimate_frequency(stream[np.isin(flat, c.pixel_flat)]))
        for c in cands
    ]
    matched = match_marker(measured, [marker], tol=0.01)
    if matched:
        print(f"matched all {len(matched[0].led_seeds)} LEDs of "
              f"'{matched[0].name}'")

    # the one-call version of everything above
    detected = detect_markers(img, stream, [marker], F_MIN)
    for m in detected:
        errs = []
        for seed in m.led_seeds:
            led = next(l for l in marker.leds if l.led_id == seed.led_id)
            uv = project(k, pose.apply(led.position))
            errs.append(float(np.linalg.norm(np.asarray(seed.center) - uv)))
        print(f"detect_markers: '{m.name}' at t={m.t_detect} us, "
              f"worst center error {max(errs):.3f} px")

    OUT.mkdir(exist_ok=True)
    pgm = OUT / "count_image.pgm"
    write_pgm(img, pgm)
    print(f"wrote {pgm}")


if __name__ == "__main__":
    main()
