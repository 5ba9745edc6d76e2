"""Clinically framed interpretations: seizure burden, periods of clinical
interest and prognostic burden classification."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, UndefinedMetricError
from .evaluation import ConfusionCounts, bootstrap_ci
from .postprocess import extract_events
from .signal_io import AnnotationMask

POI_WINDOW_S = 7200
POI_MIN_EVENT_S = 30.0
POI_ACCUM_S = 180.0
HIGH_TOTAL_MIN = 45.0
HIGH_HOURLY_MIN = 13.0


@dataclass
class BurdenSeries:
    """Seconds of seizure per clock hour; trailing partial hour is its own bin."""

    hourly_seconds: np.ndarray

    def __post_init__(self):
        self.hourly_seconds = np.asarray(self.hourly_seconds, dtype=np.int64)

    @property
    def total_min(self) -> float:
        return float(self.hourly_seconds.sum()) / 60.0

    @property
    def max_hourly_min(self) -> float:
        if self.hourly_seconds.size == 0:
            return 0.0
        return float(self.hourly_seconds.max()) / 60.0


def burden(mask: AnnotationMask) -> BurdenSeries:
    """Hourly seizure burden: hour i sums seconds in [3600i, 3600(i+1))."""
    n_hours = max(1, math.ceil(mask.duration / 3600))
    hourly = np.zeros(n_hours, dtype=np.int64)
    for h in range(n_hours):
        hourly[h] = int(np.count_nonzero(mask.mask[3600 * h : 3600 * (h + 1)]))
    return BurdenSeries(hourly_seconds=hourly)


@dataclass(frozen=True)
class PoiWindow:
    index: int
    start_s: int
    is_poi: bool


def detect_poi(mask: AnnotationMask, window_s: int = POI_WINDOW_S) -> list[PoiWindow]:
    """Non-overlapping windows flagged as periods of clinical interest.

    A window is a POI when it holds two events contributing at least 30 s
    each inside the window, or at least 3 minutes of accumulated seizure.
    A straddling event counts toward the two-event criterion only in
    windows holding at least 30 s of it.
    """
    events = extract_events(mask)
    n_windows = max(1, math.ceil(mask.duration / window_s))
    out = []
    for w in range(n_windows):
        lo, hi = w * window_s, min((w + 1) * window_s, mask.duration)
        accum = int(np.count_nonzero(mask.mask[lo:hi]))
        long_events = sum(
            1
            for on, off in events
            if min(off, hi) - max(on, lo) >= POI_MIN_EVENT_S
        )
        is_poi = long_events >= 2 or accum >= POI_ACCUM_S
        out.append(PoiWindow(index=w, start_s=lo, is_poi=is_poi))
    return out


def classify_burden(b: BurdenSeries) -> tuple[str, str]:
    """(total, max-hourly) classification; high only strictly above the
    45 min and 13 min/h thresholds."""
    total = "high" if b.total_min > HIGH_TOTAL_MIN else "low"
    hourly = "high" if b.max_hourly_min > HIGH_HOURLY_MIN else "low"
    return total, hourly


def pearson_r(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"series lengths differ: {a.shape} vs {b.shape}")
    va = a - a.mean()
    vb = b - b.mean()
    denom = math.sqrt(float(va @ va) * float(vb @ vb))
    if denom == 0:
        raise UndefinedMetricError("zero variance: correlation undefined")
    return float(va @ vb) / denom


def burden_correlation(
    a: Sequence[BurdenSeries],
    b: Sequence[BurdenSeries],
    iters: int = 1000,
    seed: int = 0,
) -> tuple[float, float, float]:
    """Pearson r between hourly burdens over concatenated hours, with a
    neonate-level bootstrap CI."""
    if len(a) != len(b):
        raise DataError(f"{len(a)} vs {len(b)} neonates")
    pairs = []
    for sa, sb in zip(a, b):
        if sa.hourly_seconds.shape != sb.hourly_seconds.shape:
            raise DataError("hour grids do not match")
        pairs.append((sa.hourly_seconds, sb.hourly_seconds))

    def stat(sample):
        xs = np.concatenate([p[0] for p in sample])
        ys = np.concatenate([p[1] for p in sample])
        return pearson_r(xs, ys)

    res = bootstrap_ci(pairs, stat, iters=iters, seed=seed)
    return res.point, res.lo, res.hi


def poi_agreement(
    pred: Sequence[PoiWindow], truth: Sequence[PoiWindow]
) -> ConfusionCounts:
    """Window-level confusion table between two POI series."""
    if len(pred) != len(truth) or any(
        p.start_s != t.start_s for p, t in zip(pred, truth)
    ):
        raise DataError("POI window grids do not match")
    tp = sum(1 for p, t in zip(pred, truth) if p.is_poi and t.is_poi)
    tn = sum(1 for p, t in zip(pred, truth) if not p.is_poi and not t.is_poi)
    fp = sum(1 for p, t in zip(pred, truth) if p.is_poi and not t.is_poi)
    fn = sum(1 for p, t in zip(pred, truth) if not p.is_poi and t.is_poi)
    return ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn)
