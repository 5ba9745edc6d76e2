"""Novelty gating: epochs outside the training distribution never count
as seizure.

An epoch is an outlier when its distance to the k-th nearest training
vector exceeds d_max, or its raw maximum amplitude exceeds amp_max. Both
comparisons are strict, so a point exactly on a threshold is kept.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import features as feats
from . import postprocess as pp
from .errors import DataError
from .evaluation import confusion, kappa_from_counts
from .preprocess import EpochGrid
from .signal_io import AnnotationMask


@dataclass
class OutlierParams:
    k: int
    d_max: float
    amp_max: float
    reference_set: np.ndarray
    dist_quantile: float | None = None
    amp_quantile: float | None = None

    def __post_init__(self):
        self.reference_set = np.asarray(self.reference_set, dtype=np.float64)
        if self.k < 1:
            raise DataError(f"neighbor count must be >= 1, got {self.k}")
        if not self.d_max > 0:
            raise DataError(f"distance threshold must be > 0, got {self.d_max}")
        if not self.amp_max > 0:
            raise DataError(f"amplitude threshold must be > 0, got {self.amp_max}")
        if self.reference_set.ndim != 2 or self.reference_set.shape[0] == 0:
            raise DataError("reference set must be a nonempty 2-D array")
        if self.k > self.reference_set.shape[0]:
            raise DataError(
                f"k={self.k} exceeds reference size {self.reference_set.shape[0]}"
            )


def kth_neighbor_distances_multi(
    queries: np.ndarray,
    reference: np.ndarray,
    ks,
    exclude_self: bool = False,
    chunk: int = 1024,
) -> dict[int, np.ndarray]:
    """Euclidean distance from each query to its k-th nearest reference
    vector (ascending order, exact search), for several k at once.

    With exclude_self=True, queries must be the reference array itself and
    each row is excluded from its own neighbor list.
    """
    queries = np.asarray(queries, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    ks = sorted(set(int(k) for k in ks))
    n_ref = reference.shape[0]
    limit = n_ref - 1 if exclude_self else n_ref
    if ks[0] < 1:
        raise DataError(f"k must be >= 1, got {ks[0]}")
    if ks[-1] > limit:
        raise DataError(f"k={ks[-1]} exceeds {limit} available neighbors")
    ref_sq = np.einsum("ij,ij->i", reference, reference)
    out = {k: np.empty(queries.shape[0]) for k in ks}
    for start in range(0, queries.shape[0], chunk):
        q = queries[start : start + chunk]
        d2 = np.einsum("ij,ij->i", q, q)[:, None] + ref_sq - 2.0 * (q @ reference.T)
        np.maximum(d2, 0.0, out=d2)
        if exclude_self:
            rows = np.arange(q.shape[0])
            d2[rows, start + rows] = np.inf
        part = np.partition(d2, ks[-1] - 1, axis=1)
        head = np.sort(part[:, : ks[-1]], axis=1)
        for k in ks:
            out[k][start : start + chunk] = head[:, k - 1]
    return {k: np.sqrt(v) for k, v in out.items()}


def kth_neighbor_distances(
    queries: np.ndarray,
    reference: np.ndarray,
    k: int,
    exclude_self: bool = False,
    chunk: int = 1024,
) -> np.ndarray:
    """Distance from each query to its k-th nearest reference vector."""
    return kth_neighbor_distances_multi(
        queries, reference, [k], exclude_self=exclude_self, chunk=chunk
    )[k]


def knn_distance(x: np.ndarray, reference: np.ndarray, k: int) -> float:
    """Distance from one feature vector to its k-th nearest reference vector."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(kth_neighbor_distances(x, reference, k)[0])


def is_outlier(fv: np.ndarray, params: OutlierParams) -> bool:
    """Gate one feature vector (22 normalized features + raw max amplitude)."""
    fv = np.asarray(fv, dtype=np.float64)
    if fv.shape != (len(feats.COLUMNS),):
        raise DataError(f"feature vector must have {len(feats.COLUMNS)} entries")
    if fv[feats.N_FEATURES] > params.amp_max:
        return True
    return knn_distance(fv[: feats.N_FEATURES], params.reference_set, params.k) > params.d_max


def outlier_flags(values: np.ndarray, params: OutlierParams, chunk: int = 1024) -> np.ndarray:
    """Vectorized gate over normalized feature rows (with raw max_amp)."""
    values = np.asarray(values, dtype=np.float64)
    dists = kth_neighbor_distances(
        values[:, : feats.N_FEATURES], params.reference_set, params.k, chunk=chunk
    )
    return (dists > params.d_max) | (values[:, feats.N_FEATURES] > params.amp_max)


# ---------------------------------------------------------------------------
# Calibration on cross-validated outputs
# ---------------------------------------------------------------------------


@dataclass
class CvRecord:
    """Cross-validated outputs for one neonate, ready for calibration.

    Distance and amplitude threshold candidates come from that neonate's
    fold-training data, so the grid search never sees its own epochs.
    """

    neonate_id: str
    stats: np.ndarray
    max_amp: np.ndarray
    bad: np.ndarray
    kth_dists: dict[int, np.ndarray]
    dist_thresholds: dict[tuple[int, float], float]
    amp_thresholds: dict[float, float]
    truth: AnnotationMask
    grid: EpochGrid


@dataclass(frozen=True)
class GateChoice:
    k: int
    dist_quantile: float
    amp_quantile: float


@dataclass
class CalibrationResult:
    gate: GateChoice
    postproc: pp.PostprocParams
    kappa: float
    table: list[dict] = field(default_factory=list)


def calibrate(
    records: list[CvRecord],
    k_grid: tuple[int, ...] = (3, 5, 9),
    dist_quantiles: tuple[float, ...] = (99.0, 99.5, 99.9),
    amp_quantiles: tuple[float, ...] = (99.0, 99.5, 99.9),
    ma_grid: tuple[int, ...] = (1, 3, 5),
    threshold_grid: tuple[float, ...] = (-0.5, -0.25, 0.0, 0.25, 0.5),
    collar_grid: tuple[float, ...] = (0.0, 8.0, 16.0),
    min_dur_s: float = 10.0,
) -> CalibrationResult:
    """Joint grid search over gate and post-processing parameters.

    Maximizes concatenated Cohen's kappa of the fully post-processed
    pipeline over the cross-validated statistics. Deterministic: ties keep
    the earliest combination in grid order.
    """
    if not records:
        raise DataError("no cross-validated records to calibrate on")
    if not (k_grid and dist_quantiles and amp_quantiles and ma_grid and threshold_grid and collar_grid):
        raise DataError("empty calibration grid")

    best = None
    table: list[dict] = []
    for k, dq in itertools.product(k_grid, dist_quantiles):
        dist_flags = [
            rec.kth_dists[k] > rec.dist_thresholds[(k, dq)] for rec in records
        ]
        for aq in amp_quantiles:
            flags = [
                df | (rec.max_amp > rec.amp_thresholds[aq])
                for df, rec in zip(dist_flags, records)
            ]
            for ma in ma_grid:
                combined = [
                    pp.smooth_and_combine(rec.stats, fl, rec.bad, ma)
                    for rec, fl in zip(records, flags)
                ]
                for thr, collar in itertools.product(threshold_grid, collar_grid):
                    counts = None
                    for rec, comb in zip(records, combined):
                        seconds = pp.epochs_to_seconds(
                            comb > thr, rec.grid, rec.truth.duration
                        )
                        seconds = pp.apply_collar(seconds, collar)
                        seconds = pp.drop_short_runs(seconds, min_dur_s)
                        c = confusion(seconds, rec.truth)
                        counts = c if counts is None else counts + c
                    kappa = kappa_from_counts(counts.tp, counts.tn, counts.fp, counts.fn)
                    entry = {
                        "k": k,
                        "dist_quantile": dq,
                        "amp_quantile": aq,
                        "ma_len": ma,
                        "threshold": thr,
                        "collar_s": collar,
                        "kappa": kappa,
                    }
                    table.append(entry)
                    if best is None or kappa > best["kappa"]:
                        best = entry
    return CalibrationResult(
        gate=GateChoice(
            k=best["k"],
            dist_quantile=best["dist_quantile"],
            amp_quantile=best["amp_quantile"],
        ),
        postproc=pp.PostprocParams(
            ma_len=best["ma_len"],
            threshold=best["threshold"],
            collar_s=best["collar_s"],
            min_dur_s=min_dur_s,
        ),
        kappa=best["kappa"],
        table=table,
    )


def fit_params(
    training_values: np.ndarray,
    choice: GateChoice,
    max_reference: int = 20000,
    seed: int = 0,
) -> OutlierParams:
    """Turn a calibrated gate choice into concrete OutlierParams.

    The reference set is a seeded subsample of the normalized training
    vectors; d_max is the chosen quantile of within-training k-th-neighbor
    distances (self excluded) and amp_max the chosen quantile of training
    max amplitudes.
    """
    training_values = np.asarray(training_values, dtype=np.float64)
    ref = training_values[:, : feats.N_FEATURES]
    if ref.shape[0] > max_reference:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(ref.shape[0], size=max_reference, replace=False))
        ref = ref[idx]
    within = kth_neighbor_distances(ref, ref, choice.k, exclude_self=True)
    d_max = float(np.percentile(within, choice.dist_quantile))
    amp_max = float(
        np.percentile(training_values[:, feats.N_FEATURES], choice.amp_quantile)
    )
    return OutlierParams(
        k=choice.k,
        d_max=d_max,
        amp_max=amp_max,
        reference_set=ref,
        dist_quantile=choice.dist_quantile,
        amp_quantile=choice.amp_quantile,
    )
