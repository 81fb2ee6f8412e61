"""Event stream container and CSV interchange format.

A stream is a numpy structured array sorted by timestamp.  The on-disk
format is plain CSV with header ``t_us,u,v,p``: integer microsecond
timestamp, integer pixel coordinates, polarity in {1, -1}.
"""

from __future__ import annotations

import numpy as np

EVENT_DTYPE = np.dtype([("t", "<i8"), ("u", "<i4"), ("v", "<i4"), ("p", "<i1")])

CSV_HEADER = "t_us,u,v,p"


def make_stream(t, u, v, p) -> np.ndarray:
    """Assemble a stream from per-field arrays (no sorting applied)."""
    t = np.asarray(t)
    out = np.empty(t.shape[0], dtype=EVENT_DTYPE)
    out["t"] = t
    out["u"] = u
    out["v"] = v
    out["p"] = p
    return out


def empty_stream() -> np.ndarray:
    return np.empty(0, dtype=EVENT_DTYPE)


def check_sorted(events: np.ndarray) -> None:
    if events.shape[0] > 1 and np.any(np.diff(events["t"]) < 0):
        raise ValueError("event stream is not sorted by timestamp")


def slice_time(events: np.ndarray, t_start: int, t_end: int) -> np.ndarray:
    """Events with t in [t_start, t_end); assumes a sorted stream."""
    lo = np.searchsorted(events["t"], t_start, side="left")
    hi = np.searchsorted(events["t"], t_end, side="left")
    return events[lo:hi]


def write_csv(path, events: np.ndarray) -> None:
    cols = np.column_stack(
        [events["t"], events["u"].astype(np.int64), events["v"], events["p"]]
    )
    with open(path, "w") as f:
        f.write(CSV_HEADER + "\n")
        np.savetxt(f, cols, fmt="%d,%d,%d,%d")


def read_csv(path) -> np.ndarray:
    with open(path) as f:
        header = f.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(
                f"expected event CSV header {CSV_HEADER!r}, got {header!r}"
            )
        lines = f.read().splitlines()
    if not lines:
        return empty_stream()
    data = np.loadtxt(lines, delimiter=",", dtype=np.int64, ndmin=2)
    return make_stream(data[:, 0], data[:, 1], data[:, 2], data[:, 3])
