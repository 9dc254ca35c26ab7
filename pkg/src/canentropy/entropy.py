"""Per-bit '1' probabilities and binary entropy of CAN identifiers."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .can_core import ID_BIT_MATRIX, ID_BITS

# A trailing window shorter than the policy length is kept only if it holds
# at least this share of the expected message count.
PARTIAL_WINDOW_MIN_SHARE = 0.25


def binary_entropy(p: float) -> float:
    """Shannon entropy in bits of a Bernoulli(p) variable, 0*log(0) taken as 0."""
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValueError(f"probability {p} outside [0, 1]")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def binary_entropy_array(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("probabilities must lie in [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -p * np.log2(p) - (1 - p) * np.log2(1 - p)
    return np.where((p == 0) | (p == 1), 0.0, h)


@dataclass(frozen=True)
class WindowPolicy:
    mode: str = "time"  # "time" or "count"
    length: float = 1.0  # seconds, or messages in count mode
    stride: float = 1.0

    def __post_init__(self):
        if self.mode not in ("time", "count"):
            raise ValueError(f"unknown window mode {self.mode!r}")
        if self.length <= 0 or self.stride <= 0:
            raise ValueError("window length and stride must be positive")
        if self.stride > self.length:
            raise ValueError("stride must not exceed length")
        if self.mode == "count" and (self.length != int(self.length) or self.stride != int(self.stride)):
            raise ValueError("count windows need integer length and stride")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "length": self.length, "stride": self.stride}

    @classmethod
    def from_dict(cls, d: dict) -> "WindowPolicy":
        return cls(d["mode"], d["length"], d["stride"])


@dataclass(frozen=True)
class BitStats:
    """Exact per-bit counts of '1' over a window of ``message_count`` frames."""

    window_id: int
    message_count: int
    ones: tuple[int, ...]
    start: int | None = None  # µs (time mode) or frame index (count mode)
    end: int | None = None
    policy: WindowPolicy | None = None

    def __post_init__(self):
        if self.message_count <= 0:
            raise ValueError("empty window")
        if len(self.ones) != ID_BITS:
            raise ValueError(f"need {ID_BITS} bit counts")
        if any(not 0 <= c <= self.message_count for c in self.ones):
            raise ValueError("bit count exceeds message count")

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.ones, dtype=float) / self.message_count

    @property
    def p_exact(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(c, self.message_count) for c in self.ones)

    @property
    def H(self) -> np.ndarray:
        return binary_entropy_array(self.p)


def _ids_array(frames) -> np.ndarray:
    return np.fromiter((f.id for f in frames), dtype=np.int64, count=len(frames))


def bit_stats(frames: Sequence, window_id: int = 0) -> BitStats:
    if len(frames) == 0:
        raise ValueError("empty window")
    ones = ID_BIT_MATRIX[_ids_array(frames)].sum(axis=0)
    return BitStats(window_id, len(frames), tuple(int(c) for c in ones))


@dataclass
class WindowSeries:
    """Windows holding at least one frame; ``gaps`` lists skipped window ids."""

    windows: list[BitStats]
    gaps: list[int] = field(default_factory=list)
    policy: WindowPolicy | None = None

    def __iter__(self):
        return iter(self.windows)

    def __len__(self):
        return len(self.windows)

    def __getitem__(self, i):
        return self.windows[i]


def windowed_stats(
    frames: Sequence,
    policy: WindowPolicy = WindowPolicy(),
    origin: int = 0,
    end: int | None = None,
) -> WindowSeries:
    """Split a time-ordered frame list into windows and count ID bits per window.

    Time windows are ``[origin + k*stride, origin + k*stride + length)`` in µs
    and run up to ``end`` (default: just past the last frame). A window that
    sticks out past the end of the data is partial; it is kept only if it
    holds at least a quarter of the messages a full window would; the
    first window is always kept so a short log still yields one window.
    """
    ids = _ids_array(frames)
    cum = np.vstack([np.zeros((1, ID_BITS), dtype=np.int64), np.cumsum(ID_BIT_MATRIX[ids], axis=0)])
    windows: list[BitStats] = []
    gaps: list[int] = []

    if policy.mode == "count":
        length, stride = int(policy.length), int(policy.stride)
        n = len(frames)
        k = 0
        while k * stride < n:
            lo = k * stride
            hi = min(lo + length, n)
            if hi - lo == length or (hi - lo) >= PARTIAL_WINDOW_MIN_SHARE * length:
                ones = cum[hi] - cum[lo]
                windows.append(BitStats(k, hi - lo, tuple(int(c) for c in ones), lo, lo + length, policy))
            if hi == n:
                break
            k += 1
        return WindowSeries(windows, gaps, policy)

    ts = np.fromiter((f.timestamp for f in frames), dtype=np.int64, count=len(frames))
    if end is None:
        end = int(ts[-1]) + 1 if len(ts) else origin
    length = int(round(policy.length * 1_000_000))
    stride = int(round(policy.stride * 1_000_000))
    in_range = int(np.searchsorted(ts, end, side="left") - np.searchsorted(ts, origin, side="left"))
    expected = in_range * length / max(end - origin, 1)
    k = 0
    while origin + k * stride < end:
        w0 = origin + k * stride
        w1 = w0 + length
        lo = int(np.searchsorted(ts, w0, side="left"))
        hi = int(np.searchsorted(ts, min(w1, end), side="left"))
        count = hi - lo
        if count == 0:
            gaps.append(k)
        elif w1 <= end or k == 0 or count >= PARTIAL_WINDOW_MIN_SHARE * expected:
            ones = cum[hi] - cum[lo]
            windows.append(BitStats(k, count, tuple(int(c) for c in ones), w0, w1, policy))
        k += 1
    return WindowSeries(windows, gaps, policy)


def write_stats_csv(stats: Sequence[BitStats], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["window_id", "message_count"]
            + [f"p{i}" for i in range(1, ID_BITS + 1)]
            + [f"H{i}" for i in range(1, ID_BITS + 1)]
        )
        for s in stats:
            w.writerow(
                [s.window_id, s.message_count]
                + [f"{x:.10g}" for x in s.p]
                + [f"{x:.10g}" for x in s.H]
            )
