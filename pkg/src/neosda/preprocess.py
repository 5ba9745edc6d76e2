"""Band-pass filtering, resampling and segmentation into 16 s epochs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal as sps

from .errors import DataError
from .signal_io import Recording

logger = logging.getLogger(__name__)

EPOCH_LEN_S = 16
BAND_HZ = (0.5, 16.0)
FS_FEAT = 64.0
# Forward-backward Butterworth. Order 8 rather than 4: the two passes
# attenuate a 20 Hz tone by |H|^2, and orders below 7 leave more than the
# 5% stopband budget at 20 Hz.
FILTER_ORDER = 8


@dataclass(frozen=True)
class EpochGrid:
    """Epoch i covers [i*hop, i*hop + epoch_len) seconds."""

    n_epochs: int
    hop_s: float = 4.0
    epoch_len_s: int = EPOCH_LEN_S
    fs_feat: float = FS_FEAT

    def __post_init__(self):
        if self.epoch_len_s != EPOCH_LEN_S:
            raise DataError(f"epoch length is fixed at {EPOCH_LEN_S} s")
        if not 0 < self.hop_s <= self.epoch_len_s:
            raise DataError(f"hop must be in (0, {self.epoch_len_s}], got {self.hop_s}")

    @property
    def epoch_samples(self) -> int:
        return int(round(self.epoch_len_s * self.fs_feat))

    def start_second(self, i: int) -> float:
        return i * self.hop_s

    def second_span(self, i: int) -> tuple[float, float]:
        return i * self.hop_s, i * self.hop_s + self.epoch_len_s


def make_grid(duration_s: float, hop_s: float = 4.0, fs_feat: float = FS_FEAT) -> EpochGrid:
    """Grid covering a recording: floor((duration - 16)/hop) + 1 epochs."""
    if duration_s < EPOCH_LEN_S:
        logger.warning(
            "recording of %.1f s is shorter than one %d s epoch; empty grid",
            duration_s,
            EPOCH_LEN_S,
        )
        return EpochGrid(n_epochs=0, hop_s=hop_s, fs_feat=fs_feat)
    n = int(math.floor((duration_s - EPOCH_LEN_S) / hop_s)) + 1
    return EpochGrid(n_epochs=n, hop_s=hop_s, fs_feat=fs_feat)


def _band_sos(fs: float):
    return sps.butter(FILTER_ORDER, BAND_HZ, btype="bandpass", fs=fs, output="sos")


def preprocess(rec: Recording, fs_feat: float = FS_FEAT) -> Recording:
    """Zero-phase band-pass 0.5-16 Hz, then polyphase resample to fs_feat.

    Requires fs >= fs_feat. Output length matches duration * fs_feat to
    within one sample.
    """
    if rec.fs < fs_feat:
        raise DataError(
            f"sampling rate {rec.fs} Hz below the supported minimum {fs_feat} Hz"
        )
    sos = _band_sos(rec.fs)
    filtered = sps.sosfiltfilt(sos, rec.data, axis=1)
    if rec.fs == fs_feat:
        data = filtered
    else:
        ratio = Fraction(fs_feat / rec.fs).limit_denominator(10000)
        data = sps.resample_poly(filtered, ratio.numerator, ratio.denominator, axis=1)
    return Recording(
        id=rec.id,
        labels=list(rec.labels),
        data=data,
        fs=fs_feat,
        start_time=rec.start_time,
        bad_electrode=None if rec.bad_electrode is None else rec.bad_electrode.copy(),
    )


def epoch(rec: Recording, grid: EpochGrid | None = None, hop_s: float = 4.0) -> tuple[np.ndarray, EpochGrid]:
    """Cut a preprocessed recording into (n_channels, n_epochs, samples).

    Epoch i of every channel covers samples [i*hop*fs, i*hop*fs + 16*fs).
    """
    if rec.fs != (grid.fs_feat if grid is not None else FS_FEAT):
        raise DataError(
            f"recording rate {rec.fs} does not match the feature rate; "
            "run preprocess() first"
        )
    if grid is None:
        grid = make_grid(rec.duration, hop_s=hop_s, fs_feat=rec.fs)
    n_seg = grid.epoch_samples
    segments = np.empty((rec.n_channels, grid.n_epochs, n_seg))
    for i in range(grid.n_epochs):
        start = int(round(grid.start_second(i) * rec.fs))
        if start + n_seg > rec.n_samples:
            raise DataError(
                f"epoch {i} needs samples up to {start + n_seg}, "
                f"recording has {rec.n_samples}"
            )
        segments[:, i, :] = rec.data[:, start : start + n_seg]
    return segments, grid


def epoch_bad_mask(
    bad_seconds: np.ndarray | None, grid: EpochGrid, n_channels: int
) -> np.ndarray:
    """Per-(channel, epoch) flag: true if any second of the epoch is bad."""
    out = np.zeros((n_channels, grid.n_epochs), dtype=bool)
    if bad_seconds is None:
        return out
    n_seconds = bad_seconds.shape[1]
    for i in range(grid.n_epochs):
        lo, hi = grid.second_span(i)
        lo = max(0, int(math.floor(lo)))
        hi = min(n_seconds, int(math.ceil(hi)))
        if hi > lo:
            out[:, i] = bad_seconds[:, lo:hi].any(axis=1)
    return out
