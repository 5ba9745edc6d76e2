"""Per-epoch feature catalog: 22 classifier features plus max amplitude.

Column order is fixed and versioned (FEATURE_VERSION); the trained model
and feature caches both carry the version string so a stale cache or model
cannot be silently combined with differently ordered features.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .errors import DataError

FEATURE_NAMES = [
    "rms",
    "peak_to_peak",
    "line_length",
    "zero_crossings",
    "local_extrema",
    "skewness",
    "kurtosis",
    "sneo_mean",
    "sneo_var",
    "hjorth_activity",
    "hjorth_mobility",
    "hjorth_complexity",
    "acf_first_zero_s",
    "acf_zero_count_half_s",
    "total_power",
    "peak_freq_hz",
    "sef90_hz",
    "sef95_hz",
    "rel_power_delta",
    "rel_power_theta",
    "rel_power_alpha",
    "spectral_entropy",
]
MAX_AMP_NAME = "max_amp"
COLUMNS = FEATURE_NAMES + [MAX_AMP_NAME]
N_FEATURES = len(FEATURE_NAMES)
FEATURE_VERSION = "bof22-v1"

BANDS_HZ = {"delta": (0.5, 4.0), "theta": (4.0, 8.0), "alpha": (8.0, 13.0), "beta": (13.0, 16.0)}
TOTAL_BAND_HZ = (0.5, 16.0)
SNEO_SMOOTH_S = 0.120
WELCH_WINDOW_S = 4.0


def _crossing_count(x: np.ndarray) -> int:
    # Transition into strictly-positive from non-positive or vice versa.
    # A constant-zero stretch contributes nothing.
    up = (x[:-1] <= 0) & (x[1:] > 0)
    down = (x[:-1] >= 0) & (x[1:] < 0)
    return int(np.count_nonzero(up | down))


def sneo_profile(x: np.ndarray, fs: float) -> np.ndarray:
    """Smoothed nonlinear energy: psi[n] = x[n]^2 - x[n-1]*x[n+1], then a
    rectangular moving average of 120 ms (valid mode, so a constant psi is
    returned unchanged)."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 3:
        raise DataError(f"nonlinear energy needs >= 3 samples, got {x.size}")
    psi = x[1:-1] ** 2 - x[:-2] * x[2:]
    win = max(1, int(round(SNEO_SMOOTH_S * fs)))
    if win >= psi.size:
        return np.asarray([psi.mean()])
    kernel = np.full(win, 1.0 / win)
    return np.convolve(psi, kernel, mode="valid")


def sneo(x: np.ndarray, fs: float) -> float:
    """Mean of the smoothed nonlinear energy profile."""
    return float(sneo_profile(x, fs).mean())


def _welch(x: np.ndarray, fs: float):
    # Symmetric (not periodic) Hann keeps every spectral feature invariant
    # under time reversal of the epoch.
    nperseg = min(x.size, int(round(WELCH_WINDOW_S * fs)))
    return sps.welch(
        x,
        fs=fs,
        window=sps.windows.hann(nperseg, sym=True),
        nperseg=nperseg,
        noverlap=nperseg // 2,
    )


def _acf(x: np.ndarray, max_lag: int) -> np.ndarray | None:
    x0 = x - x.mean()
    denom = float(np.dot(x0, x0))
    if denom == 0.0:
        return None
    acf = np.empty(max_lag + 1)
    acf[0] = 1.0
    for k in range(1, max_lag + 1):
        acf[k] = float(np.dot(x0[:-k], x0[k:])) / denom
    return acf


def extract_features(seg: np.ndarray, fs: float) -> np.ndarray:
    """Feature vector for one epoch, in COLUMNS order (23 values).

    The input must be a full 16 s epoch at the feature rate; NaN/Inf
    samples are an error. Degenerate (all-zero) epochs get sentinel zeros
    for spectral and shape features, never NaN.
    """
    x = np.asarray(seg, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite sample in epoch")
    n = x.size

    out = np.zeros(len(COLUMNS))
    dx = np.diff(x)

    out[0] = np.sqrt(np.mean(x**2))
    out[1] = np.max(x) - np.min(x)
    out[2] = np.sum(np.abs(dx))
    out[3] = _crossing_count(x)
    out[4] = _crossing_count(dx)

    mu = x.mean()
    m2 = np.mean((x - mu) ** 2)
    if m2 > 0:
        centered = x - mu
        out[5] = np.mean(centered**3) / m2**1.5
        out[6] = np.mean(centered**4) / m2**2 - 3.0

    profile = sneo_profile(x, fs)
    out[7] = profile.mean()
    out[8] = profile.var()

    var_x = np.var(x)
    var_dx = np.var(dx)
    out[9] = var_x
    if var_x > 0:
        out[10] = np.sqrt(var_dx / var_x)
    if var_dx > 0 and var_x > 0:
        mob_dx = np.sqrt(np.var(np.diff(dx)) / var_dx)
        out[11] = mob_dx / out[10]

    max_lag = int(round(fs))
    acf = _acf(x, max_lag)
    if acf is not None:
        below = np.nonzero(acf[1:] <= 0)[0]
        first = (below[0] + 1) if below.size else max_lag
        out[12] = first / fs
        half = int(round(0.5 * fs))
        out[13] = _crossing_count(acf[: half + 1])

    freqs, psd = _welch(x, fs)
    df = freqs[1] - freqs[0]
    lo, hi = TOTAL_BAND_HZ
    in_band = (freqs >= lo) & (freqs <= hi)
    band_psd = psd[in_band]
    band_freqs = freqs[in_band]
    total = float(band_psd.sum())
    out[14] = total * df
    if total > 0:
        out[15] = band_freqs[int(np.argmax(band_psd))]
        cum = np.cumsum(band_psd) / total
        out[16] = band_freqs[int(np.searchsorted(cum, 0.90))]
        out[17] = band_freqs[int(np.searchsorted(cum, 0.95))]
        for j, name in enumerate(("delta", "theta", "alpha")):
            blo, bhi = BANDS_HZ[name]
            sel = (band_freqs >= blo) & (band_freqs < bhi)
            out[18 + j] = float(band_psd[sel].sum()) / total
        p = band_psd[band_psd > 0] / total
        out[21] = float(-(p * np.log(p)).sum()) / np.log(band_psd.size)

    out[22] = np.max(np.abs(x)) if n else 0.0
    return out


def band_powers(seg: np.ndarray, fs: float) -> dict[str, float]:
    """Absolute power per band plus the total in-band power (PSD units x Hz).

    Bands partition the analysis band exactly, so the four band powers sum
    to the total.
    """
    x = np.asarray(seg, dtype=np.float64)
    freqs, psd = _welch(x, fs)
    df = freqs[1] - freqs[0]
    powers = {}
    for name, (blo, bhi) in BANDS_HZ.items():
        if name == "beta":
            sel = (freqs >= blo) & (freqs <= bhi)
        else:
            sel = (freqs >= blo) & (freqs < bhi)
        powers[name] = float(psd[sel].sum()) * df
    lo, hi = TOTAL_BAND_HZ
    powers["total"] = float(psd[(freqs >= lo) & (freqs <= hi)].sum()) * df
    return powers


# ---------------------------------------------------------------------------
# Feature matrices
# ---------------------------------------------------------------------------


@dataclass
class FeatureMatrix:
    """Feature rows for every (channel, epoch) of one recording.

    Rows are channel-major: row = channel * n_epochs + epoch.
    """

    recording_id: str
    values: np.ndarray
    n_channels: int
    n_epochs: int
    feature_version: str = FEATURE_VERSION

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(COLUMNS):
            raise DataError(
                f"feature matrix must be (rows, {len(COLUMNS)}), got {self.values.shape}"
            )
        if self.values.shape[0] != self.n_channels * self.n_epochs:
            raise DataError("row count must equal n_channels * n_epochs")

    @property
    def channel_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_channels), self.n_epochs)

    @property
    def epoch_index(self) -> np.ndarray:
        return np.tile(np.arange(self.n_epochs), self.n_channels)

    @property
    def classifier_values(self) -> np.ndarray:
        return self.values[:, :N_FEATURES]

    @property
    def max_amp(self) -> np.ndarray:
        return self.values[:, N_FEATURES]

    def as_grid(self, column: int | str) -> np.ndarray:
        """One column reshaped to (n_channels, n_epochs)."""
        if isinstance(column, str):
            column = COLUMNS.index(column)
        return self.values[:, column].reshape(self.n_channels, self.n_epochs)


def feature_matrix(segments: np.ndarray, fs: float, recording_id: str) -> FeatureMatrix:
    """Extract features for every (channel, epoch) segment."""
    n_channels, n_epochs, _ = segments.shape
    values = np.empty((n_channels * n_epochs, len(COLUMNS)))
    for c in range(n_channels):
        for e in range(n_epochs):
            try:
                values[c * n_epochs + e] = extract_features(segments[c, e], fs)
            except DataError as exc:
                raise DataError(
                    f"{recording_id}: channel {c}, epoch {e}: {exc}"
                ) from exc
    return FeatureMatrix(
        recording_id=recording_id,
        values=values,
        n_channels=n_channels,
        n_epochs=n_epochs,
    )


@dataclass
class NormStats:
    """Per-feature z-scoring statistics fitted on training data."""

    mean: np.ndarray
    sd: np.ndarray
    feature_version: str = FEATURE_VERSION

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.sd = np.asarray(self.sd, dtype=np.float64)
        if self.mean.shape != (N_FEATURES,) or self.sd.shape != (N_FEATURES,):
            raise DataError(f"stats must cover the {N_FEATURES} classifier features")
        bad = np.nonzero(self.sd <= 0)[0]
        if bad.size:
            names = [FEATURE_NAMES[i] for i in bad]
            raise DataError(f"zero standard deviation for feature(s) {names}")


def compute_stats(values: np.ndarray) -> NormStats:
    """Fit NormStats on the classifier columns of a raw feature array."""
    values = np.asarray(values, dtype=np.float64)
    cols = values[:, :N_FEATURES]
    return NormStats(mean=cols.mean(axis=0), sd=cols.std(axis=0))


def normalize_values(values: np.ndarray, stats: NormStats) -> np.ndarray:
    """Z-score the 22 classifier columns; max_amp stays in raw microvolts."""
    out = np.array(values, dtype=np.float64, copy=True)
    out[:, :N_FEATURES] = (out[:, :N_FEATURES] - stats.mean) / stats.sd
    return out


def denormalize_values(values: np.ndarray, stats: NormStats) -> np.ndarray:
    out = np.array(values, dtype=np.float64, copy=True)
    out[:, :N_FEATURES] = out[:, :N_FEATURES] * stats.sd + stats.mean
    return out


def normalize(fm: FeatureMatrix, stats: NormStats) -> FeatureMatrix:
    if stats.feature_version != fm.feature_version:
        raise DataError(
            f"feature version mismatch: stats {stats.feature_version}, "
            f"matrix {fm.feature_version}"
        )
    return FeatureMatrix(
        recording_id=fm.recording_id,
        values=normalize_values(fm.values, stats),
        n_channels=fm.n_channels,
        n_epochs=fm.n_epochs,
        feature_version=fm.feature_version,
    )


def save_csv(fm: FeatureMatrix, path: str | Path) -> None:
    """Cache a feature matrix as CSV with the versioned column header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["# feature_version", fm.feature_version])
        writer.writerow(
            ["recording_id", fm.recording_id, "n_channels", fm.n_channels, "n_epochs", fm.n_epochs]
        )
        writer.writerow(["channel", "epoch"] + COLUMNS)
        chan = fm.channel_index
        ep = fm.epoch_index
        for r in range(fm.values.shape[0]):
            writer.writerow(
                [chan[r], ep[r]] + [repr(float(v)) for v in fm.values[r]]
            )


def load_csv(path: str | Path) -> FeatureMatrix:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3 or rows[0][0] != "# feature_version":
        raise DataError(f"{path.name}: not a feature cache file")
    version = rows[0][1]
    if version != FEATURE_VERSION:
        raise DataError(
            f"{path.name}: feature version {version!r} does not match {FEATURE_VERSION!r}"
        )
    meta = rows[1]
    rec_id, n_channels, n_epochs = meta[1], int(meta[3]), int(meta[5])
    header = rows[2]
    if header[2:] != COLUMNS:
        raise DataError(f"{path.name}: column order does not match {FEATURE_VERSION}")
    values = np.array([[float(v) for v in row[2:]] for row in rows[3:]])
    return FeatureMatrix(
        recording_id=rec_id,
        values=values,
        n_channels=n_channels,
        n_epochs=n_epochs,
        feature_version=version,
    )
