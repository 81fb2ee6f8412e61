"""Per-LED event trackers: exponential moving average with adaptive radius.

Each LED found by detection gets one tracker.  An event routed to a tracker
drags the center by a fixed factor beta; every n_radius events the capture
radius is reset to twice the mean distance of those events from the center,
which for a uniformly covered disc of radius r converges to 4r/3.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

logger = logging.getLogger(__name__)

DEFAULT_BETA = 0.02
DEFAULT_RADIUS_UPDATE_EVENTS = 32
MIN_RADIUS_PX = 1.0


@dataclass
class Tracker:
    led_id: int
    frequency: float
    center: np.ndarray  # (u, v), float
    radius: float
    last_event_t: int
    events_since_radius_update: int = 0
    distance_accumulator: float = 0.0
    events_total: int = 0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(2).copy()
        self.radius = max(float(self.radius), MIN_RADIUS_PX)

    @property
    def period_us(self) -> float:
        return 1e6 / self.frequency

    @property
    def mean_event_distance(self) -> float:
        # by the radius rule, radius == 2 * mean event distance
        return self.radius / 2.0

    def contains(self, u: float, v: float) -> bool:
        return (u - self.center[0]) ** 2 + (v - self.center[1]) ** 2 <= self.radius**2

    def is_starved(self, now_us: int, starvation_periods: float) -> bool:
        return (now_us - self.last_event_t) > starvation_periods * self.period_us


def spawn_trackers(marker, spawn_t: int | None = None) -> list:
    """One tracker per LED seed of a detected marker, ordered by LED id."""
    t0 = marker.t_detect if spawn_t is None else spawn_t
    out = []
    for seed in sorted(marker.led_seeds, key=lambda s: s.led_id):
        out.append(
            Tracker(
                led_id=seed.led_id,
                frequency=seed.frequency,
                center=seed.center,
                radius=seed.radius_estimate,
                last_event_t=t0,
            )
        )
    return out


def route_event(u: float, v: float, trackers) -> Tracker | None:
    """The tracker whose capture disc contains the pixel, or None.

    When capture discs overlap, the nearest center wins; exact ties go to
    the lower LED id (trackers are kept sorted by id).  Overlap is a
    configuration smell and is logged.
    """
    best = None
    best_d2 = np.inf
    n_inside = 0
    for tr in trackers:
        d2 = (u - tr.center[0]) ** 2 + (v - tr.center[1]) ** 2
        if d2 <= tr.radius * tr.radius:
            n_inside += 1
            if d2 < best_d2:
                best = tr
                best_d2 = d2
    if n_inside > 1:
        logger.debug("event (%s, %s) inside %d capture discs", u, v, n_inside)
    return best


def route_events(pix: np.ndarray, trackers) -> np.ndarray:
    """Vectorized routing: (m, 2) pixels -> tracker index per event, -1 if none."""
    m = pix.shape[0]
    if m == 0 or not trackers:
        return np.full(m, -1, dtype=np.int64)
    centers = np.array([tr.center for tr in trackers])
    radii = np.array([tr.radius for tr in trackers])
    d2 = ((pix[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    inside = d2 <= radii[None, :] ** 2
    d2 = np.where(inside, d2, np.inf)
    assign = np.argmin(d2, axis=1)
    assign[~inside.any(axis=1)] = -1
    n_overlap = int(np.count_nonzero(inside.sum(axis=1) > 1))
    if n_overlap:
        logger.debug("%d events fell inside multiple capture discs", n_overlap)
    return assign


def update_tracker(tr: Tracker, u: float, v: float, t: int,
                   beta: float = DEFAULT_BETA) -> None:
    """Single-event center update; events must arrive in timestamp order."""
    if t < tr.last_event_t:
        raise ValueError(
            f"event at t={t} is older than tracker state (t={tr.last_event_t})"
        )
    tr.distance_accumulator += float(np.hypot(u - tr.center[0], v - tr.center[1]))
    tr.center[0] = beta * u + (1.0 - beta) * tr.center[0]
    tr.center[1] = beta * v + (1.0 - beta) * tr.center[1]
    tr.events_since_radius_update += 1
    tr.events_total += 1
    tr.last_event_t = t


def update_radius(tr: Tracker, n_radius: int = DEFAULT_RADIUS_UPDATE_EVENTS) -> None:
    """Radius <- 2 * mean event distance over the last n_radius events, >= 1 px."""
    if tr.events_since_radius_update != n_radius:
        raise ValueError(
            f"radius update expects exactly {n_radius} accumulated events, "
            f"have {tr.events_since_radius_update}"
        )
    tr.radius = max(2.0 * tr.distance_accumulator / n_radius, MIN_RADIUS_PX)
    tr.events_since_radius_update = 0
    tr.distance_accumulator = 0.0


def step(tr: Tracker, u: float, v: float, t: int, beta: float = DEFAULT_BETA,
         n_radius: int = DEFAULT_RADIUS_UPDATE_EVENTS) -> None:
    """update_tracker plus the periodic radius update: the per-event contract."""
    update_tracker(tr, u, v, t, beta)
    if tr.events_since_radius_update == n_radius:
        update_radius(tr, n_radius)


def feed(tr: Tracker, pix: np.ndarray, ts: np.ndarray, beta: float = DEFAULT_BETA,
         n_radius: int = DEFAULT_RADIUS_UPDATE_EVENTS) -> None:
    """Batch-apply step() over time-ordered events; numerically identical
    to the scalar loop up to float rounding (the EMA recurrence is run as
    an IIR filter)."""
    m = pix.shape[0]
    if m == 0:
        return
    if ts[0] < tr.last_event_t:
        raise ValueError(
            f"event at t={ts[0]} is older than tracker state (t={tr.last_event_t})"
        )
    a = [1.0, -(1.0 - beta)]
    b = [beta]
    cx, _ = lfilter(b, a, pix[:, 0], zi=[(1.0 - beta) * tr.center[0]])
    cy, _ = lfilter(b, a, pix[:, 1], zi=[(1.0 - beta) * tr.center[1]])
    prev_x = np.concatenate([[tr.center[0]], cx[:-1]])
    prev_y = np.concatenate([[tr.center[1]], cy[:-1]])
    dists = np.hypot(pix[:, 0] - prev_x, pix[:, 1] - prev_y)

    c0 = tr.events_since_radius_update
    counter = c0 + np.arange(1, m + 1)
    boundaries = np.flatnonzero(counter % n_radius == 0)
    csum = np.concatenate([[0.0], np.cumsum(dists)])
    acc = tr.distance_accumulator
    start = 0
    for j in boundaries:
        acc += csum[j + 1] - csum[start]
        tr.radius = max(2.0 * acc / n_radius, MIN_RADIUS_PX)
        acc = 0.0
        start = j + 1
    tr.distance_accumulator = acc + csum[m] - csum[start]
    tr.events_since_radius_update = int((c0 + m) % n_radius)
    tr.center[0] = cx[-1]
    tr.center[1] = cy[-1]
    tr.events_total += m
    tr.last_event_t = int(ts[-1])
