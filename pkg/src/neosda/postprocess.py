"""Turn per-(channel, epoch) decision statistics into per-second masks.

Pipeline order: mask outlier/bad epochs to -inf, per-channel moving
average, cross-channel max, threshold, zero-order-hold to 1 Hz (OR over
overlapping epochs), collar extension, then minimum-duration filter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError
from .preprocess import EpochGrid
from .signal_io import AnnotationMask


@dataclass(frozen=True)
class PostprocParams:
    ma_len: int = 3
    threshold: float = 0.0
    collar_s: float = 16.0
    min_dur_s: float = 10.0

    def __post_init__(self):
        if self.ma_len < 1 or self.ma_len % 2 == 0:
            raise DataError(f"moving-average length must be odd >= 1, got {self.ma_len}")
        if self.collar_s < 0:
            raise DataError(f"collar must be >= 0, got {self.collar_s}")
        if not self.min_dur_s > 0:
            raise DataError(f"minimum duration must be > 0, got {self.min_dur_s}")


def moving_average(stats: np.ndarray, ma_len: int) -> np.ndarray:
    """Centered moving average per channel with edge-truncated windows.

    -inf values propagate: any window containing a masked epoch averages
    to -inf, so masked epochs never contribute positive evidence.
    """
    if ma_len == 1:
        return stats.copy()
    half = ma_len // 2
    pad = np.full((stats.shape[0], half), np.nan)
    ext = np.concatenate([pad, stats, pad], axis=1)
    win = sliding_window_view(ext, ma_len, axis=1)
    counts = np.sum(~np.isnan(win), axis=2)
    return np.nansum(win, axis=2) / counts


def smooth_and_combine(
    stats: np.ndarray,
    outliers: np.ndarray | None,
    bad: np.ndarray | None,
    ma_len: int,
) -> np.ndarray:
    """Steps 1-3: mask to -inf, smooth per channel, max across channels."""
    stats = np.asarray(stats, dtype=np.float64)
    if stats.ndim != 2:
        raise DataError("decision statistics must be (n_channels, n_epochs)")
    if not np.all(np.isfinite(stats)):
        raise DataError("decision statistics must be finite")
    masked = stats.copy()
    for flags in (outliers, bad):
        if flags is not None:
            flags = np.asarray(flags, dtype=bool)
            if flags.shape != stats.shape:
                raise DataError(
                    f"flag array shape {flags.shape} does not match stats {stats.shape}"
                )
            masked[flags] = -np.inf
    smoothed = moving_average(masked, ma_len)
    return smoothed.max(axis=0)


def epochs_to_seconds(binary: np.ndarray, grid: EpochGrid, duration_s: float) -> np.ndarray:
    """Zero-order hold of epoch decisions onto the 1 Hz grid (OR-combined)."""
    n_seconds = math.ceil(duration_s)
    out = np.zeros(n_seconds, dtype=bool)
    for i in np.nonzero(binary)[0]:
        lo, hi = grid.second_span(int(i))
        lo = max(0, int(math.floor(lo)))
        hi = min(n_seconds, int(math.ceil(hi)))
        out[lo:hi] = True
    return out


def extract_events(mask) -> list[tuple[int, int]]:
    """Maximal runs of true seconds as half-open (onset_s, offset_s) pairs."""
    arr = mask.mask if isinstance(mask, AnnotationMask) else np.asarray(mask, dtype=bool)
    padded = np.concatenate([[False], arr, [False]])
    changes = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [(int(changes[i]), int(changes[i + 1])) for i in range(0, len(changes), 2)]


def _rebuild(events, n_seconds: int) -> np.ndarray:
    out = np.zeros(n_seconds, dtype=bool)
    for onset, offset in events:
        lo = max(0, int(math.floor(onset)))
        hi = min(n_seconds, int(math.ceil(offset)))
        if hi > lo:
            out[lo:hi] = True
    return out


def apply_collar(mask: np.ndarray, collar_s: float) -> np.ndarray:
    """Extend every run by collar_s seconds on both sides."""
    if collar_s == 0:
        return mask.copy()
    events = [(on - collar_s, off + collar_s) for on, off in extract_events(mask)]
    return _rebuild(events, len(mask))


def drop_short_runs(mask: np.ndarray, min_dur_s: float) -> np.ndarray:
    events = [e for e in extract_events(mask) if e[1] - e[0] >= min_dur_s]
    return _rebuild(events, len(mask))


def postprocess(
    stats: np.ndarray,
    outliers: np.ndarray | None,
    bad: np.ndarray | None,
    params: PostprocParams,
    grid: EpochGrid,
    duration_s: float,
    rater: str = "sda",
) -> AnnotationMask:
    """Full post-processing chain; all-outlier input yields an all-false mask."""
    combined = smooth_and_combine(stats, outliers, bad, params.ma_len)
    binary = combined > params.threshold
    seconds = epochs_to_seconds(binary, grid, duration_s)
    seconds = apply_collar(seconds, params.collar_s)
    seconds = drop_short_runs(seconds, params.min_dur_s)
    return AnnotationMask(rater=rater, mask=seconds)


def second_trace(
    stats: np.ndarray,
    outliers: np.ndarray | None,
    bad: np.ndarray | None,
    params: PostprocParams,
    grid: EpochGrid,
    duration_s: float,
) -> np.ndarray:
    """Per-second decision statistic: max over epochs covering each second
    of the smoothed, channel-combined statistic. Seconds not covered by any
    epoch (or covered only by masked epochs) are -inf."""
    combined = smooth_and_combine(stats, outliers, bad, params.ma_len)
    n_seconds = math.ceil(duration_s)
    trace = np.full(n_seconds, -np.inf)
    for i in range(grid.n_epochs):
        lo, hi = grid.second_span(i)
        lo = max(0, int(math.floor(lo)))
        hi = min(n_seconds, int(math.ceil(hi)))
        if hi > lo:
            np.maximum(trace[lo:hi], combined[i], out=trace[lo:hi])
    return trace
