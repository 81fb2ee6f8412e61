"""Windowed detection of blinking-LED markers.

Detection accumulates events into a per-pixel count image over a window of
at least two periods of the slowest configured LED, thresholds out pixels
that cannot belong to an LED (count must strictly exceed window_length *
f_min), groups surviving pixels into 8-connected regions, and identifies
each region's LED by the dominant per-pixel inter-event interval.  A marker
is reported only when every one of its LEDs matched exactly one region.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

logger = logging.getLogger(__name__)

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


class InsufficientEvents(ValueError):
    """Raised when a region holds no repeated per-pixel events to time."""


@dataclass(frozen=True)
class CountImage:
    """Per-pixel event counts over one detection window [t_start, t_end)."""

    counts: np.ndarray  # (height, width) uint32
    t_start: int
    t_end: int

    @property
    def window_us(self) -> int:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class CandidateRegion:
    """One connected bright region of a count image."""

    centroid: np.ndarray  # (u, v), count-weighted
    area: int  # pixels above threshold
    total_count: int  # events in the region
    radius_estimate: float  # 2 * count-weighted mean pixel distance from centroid
    pixel_flat: np.ndarray  # sorted flat indices (v * width + u) of member pixels


@dataclass(frozen=True)
class FrequencyEstimate:
    frequency: float  # Hz, = 1e6 / peak_us
    peak_us: int  # histogram peak of per-pixel event intervals
    peak_fraction: float  # share of intervals in the peak bin
    n_intervals: int


@dataclass(frozen=True)
class LedSeed:
    """Detection output for a single LED: where it is and what it blinks at."""

    led_id: int
    center: np.ndarray  # (u, v)
    frequency: float  # configured frequency of the matched LED
    frequency_measured: float
    radius_estimate: float


@dataclass(frozen=True)
class DetectedMarker:
    name: str
    t_detect: int  # window end timestamp
    led_seeds: tuple


def accumulate(events, t_start: int, window_us: int, width: int, height: int,
               f_min: float) -> CountImage:
    """Count events per pixel over [t_start, t_start + window_us).

    The window must span at least two periods of the slowest expected LED
    (2e6 / f_min microseconds), otherwise the count threshold cannot
    separate LEDs from background.
    """
    if window_us < 2e6 / f_min:
        raise ValueError(
            f"detection window {window_us} us is shorter than two periods "
            f"of the slowest LED ({2e6 / f_min:.0f} us at f_min={f_min} Hz)"
        )
    counts = np.zeros((height, width), dtype=np.uint32)
    if events.shape[0]:
        t = events["t"]
        u = events["u"]
        v = events["v"]
        sel = (t >= t_start) & (t < t_start + window_us)
        sel &= (u >= 0) & (u < width) & (v >= 0) & (v < height)
        flat = v[sel].astype(np.int64) * width + u[sel]
        binc = np.bincount(flat, minlength=width * height)
        counts += binc.reshape(height, width).astype(np.uint32)
    return CountImage(counts=counts, t_start=t_start, t_end=t_start + window_us)


def find_candidates(img: CountImage, f_min: float, min_area: int = 3):
    """Threshold, label and summarize candidate LED regions.

    A pixel survives when its count strictly exceeds window_length * f_min:
    an LED blinking at exactly f_min is excluded by design.  Regions are
    8-connected; those smaller than min_area pixels are dropped.
    """
    threshold = img.window_us * 1e-6 * f_min
    mask = img.counts > threshold
    labels, n = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if n == 0:
        return []
    height, width = img.counts.shape
    lab_flat = labels.ravel()
    cnt_flat = img.counts.ravel().astype(np.float64)
    w = np.where(lab_flat > 0, cnt_flat, 0.0)
    vv, uu = np.divmod(np.arange(lab_flat.shape[0], dtype=np.int64), width)
    area = np.bincount(lab_flat, minlength=n + 1)
    total = np.bincount(lab_flat, weights=w, minlength=n + 1)
    su = np.bincount(lab_flat, weights=w * uu, minlength=n + 1)
    sv = np.bincount(lab_flat, weights=w * vv, minlength=n + 1)
    out = []
    for k in range(1, n + 1):
        if area[k] < min_area:
            continue
        cu, cv = su[k] / total[k], sv[k] / total[k]
        member = np.flatnonzero(lab_flat == k)
        d = np.hypot(uu[member] - cu, vv[member] - cv)
        radius = 2.0 * float(np.sum(d * cnt_flat[member]) / total[k])
        out.append(
            CandidateRegion(
                centroid=np.array([cu, cv]),
                area=int(area[k]),
                total_count=int(total[k]),
                radius_estimate=radius,
                pixel_flat=member,
            )
        )
    return out


def region_events(region: CandidateRegion, events, width: int):
    """Window events whose pixel belongs to the region."""
    flat = events["v"].astype(np.int64) * width + events["u"]
    return events[np.isin(flat, region.pixel_flat)]


def estimate_frequency(evts) -> FrequencyEstimate:
    """Blink frequency from pooled per-pixel consecutive event intervals.

    All same-pixel interval lengths go into one shared 1-microsecond-bin
    histogram; the peak bin is the blink period.  Requires at least one
    repeated event on some pixel (two events from two blinks).
    """
    if evts.shape[0] < 2:
        raise InsufficientEvents("need at least two events to estimate a frequency")
    pix = evts["v"].astype(np.int64) << 32 | evts["u"].astype(np.int64)
    order = np.lexsort((evts["t"], pix))
    sp = pix[order]
    st = evts["t"][order]
    same = sp[1:] == sp[:-1]
    diffs = (st[1:] - st[:-1])[same]
    diffs = diffs[diffs > 0]
    if diffs.shape[0] == 0:
        raise InsufficientEvents("no pixel saw two blinks in this window")
    hist = np.bincount(diffs)
    peak = int(np.argmax(hist))
    return FrequencyEstimate(
        frequency=1e6 / peak,
        peak_us=peak,
        peak_fraction=float(hist[peak] / diffs.shape[0]),
        n_intervals=int(diffs.shape[0]),
    )


def match_marker(measured, alm_configs, tol: float = 0.01, t_detect: int = 0):
    """Assign candidate regions to configured markers by frequency.

    ``measured`` is a list of (CandidateRegion, FrequencyEstimate) pairs.
    Every LED of a marker must match exactly one region within relative
    tolerance ``tol``; a missing LED or an ambiguous (duplicate) match
    suppresses the whole marker for this window.
    """
    detected = []
    for alm in alm_configs:
        seeds = []
        used = set()
        ok = True
        for led in alm.leds:
            hits = [
                (i, reg, est)
                for i, (reg, est) in enumerate(measured)
                if abs(est.frequency - led.frequency) / led.frequency <= tol
            ]
            if len(hits) != 1:
                if len(hits) > 1:
                    logger.debug(
                        "marker %s LED %d: %d candidate regions within tolerance",
                        alm.name, led.led_id, len(hits),
                    )
                ok = False
                break
            i, reg, est = hits[0]
            if i in used:
                ok = False
                break
            used.add(i)
            seeds.append(
                LedSeed(
                    led_id=led.led_id,
                    center=reg.centroid,
                    frequency=led.frequency,
                    frequency_measured=est.frequency,
                    radius_estimate=reg.radius_estimate,
                )
            )
        if ok:
            detected.append(DetectedMarker(name=alm.name, t_detect=t_detect, led_seeds=tuple(seeds)))
    return detected


def detect_markers(img: CountImage, window_events, alm_configs, f_min: float,
                   min_area: int = 3, tol: float = 0.01):
    """Full detection stage on one accumulated window."""
    regions = find_candidates(img, f_min, min_area)
    width = img.counts.shape[1]
    measured = []
    for reg in regions:
        try:
            est = estimate_frequency(region_events(reg, window_events, width))
        except InsufficientEvents:
            continue
        measured.append((reg, est))
    return match_marker(measured, alm_configs, tol=tol, t_detect=img.t_end)


def write_pgm(img: CountImage, path) -> None:
    """Dump a count image as a plain-text portable greymap for inspection."""
    c = img.counts
    maxval = max(int(c.max()), 1)
    with open(path, "w") as f:
        f.write(f"P2\n{c.shape[1]} {c.shape[0]}\n{maxval}\n")
        for row in c:
            f.write(" ".join(str(int(x)) for x in row) + "\n")
