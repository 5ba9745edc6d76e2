"""Corpus-level orchestration: loading, hyperparameter search,
cross-validation, calibration, detection and re-training.

Corpus directory layout: one EDF per neonate plus event-CSV sidecars
named <id>.<rater>.events.csv. A rater literally named "truth" is used as
the reference; otherwise the unanimous consensus of all raters is. An
optional <id>.bad.csv marks bad electrode seconds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import features as feats
from . import model as mdl
from . import outlier_gate as og
from . import postprocess as pp
from .errors import DataError
from .evaluation import (
    MetricsReport,
    NeonateEval,
    confusion,
    evaluate_corpus,
    kappa_from_counts,
)
from .features import FeatureMatrix
from .preprocess import EpochGrid, epoch, epoch_bad_mask, make_grid, preprocess
from .signal_io import (
    AnnotationMask,
    Montage,
    Recording,
    apply_montage,
    consensus,
    load_annotations,
    load_bad_electrodes,
    read_edf,
)

logger = logging.getLogger(__name__)

DEFAULT_MONTAGE = Montage((("F3", "P3"), ("F4", "P4"), ("P3", "P4")))


@dataclass
class NeonateData:
    """Prepared per-neonate inputs for training and evaluation."""

    id: str
    fm: FeatureMatrix
    labels: np.ndarray
    truth: AnnotationMask
    raters: dict[str, AnnotationMask]
    bad: np.ndarray
    grid: EpochGrid
    duration_s: float

    @property
    def row_labels(self) -> np.ndarray:
        return self.labels[self.fm.epoch_index]

    @property
    def row_bad(self) -> np.ndarray:
        return self.bad.reshape(-1)


def prepare_recording(
    rec: Recording, montage: Montage, hop_s: float = 4.0
) -> tuple[FeatureMatrix, EpochGrid, np.ndarray]:
    """Montage, filter/resample, epoch and featurize one recording."""
    derived = apply_montage(rec, montage)
    clean = preprocess(derived)
    grid = make_grid(clean.duration, hop_s=hop_s)
    segments, grid = epoch(clean, grid)
    fm = feats.feature_matrix(segments, clean.fs, rec.id)
    bad = epoch_bad_mask(derived.bad_electrode, grid, derived.n_channels)
    return fm, grid, bad


def load_corpus(
    data_dir: str | Path, montage: Montage = DEFAULT_MONTAGE, hop_s: float = 4.0
) -> list[NeonateData]:
    """Load every neonate in a corpus directory (sorted by id)."""
    data_dir = Path(data_dir)
    edfs = sorted(data_dir.glob("*.edf"))
    if not edfs:
        raise DataError(f"no EDF recordings found in {data_dir}")
    out = []
    for edf_path in edfs:
        rec = read_edf(edf_path)
        bad_path = data_dir / f"{rec.id}.bad.csv"
        if bad_path.exists():
            rec.bad_electrode = load_bad_electrodes(bad_path, rec.duration, rec.labels)
        raters = {}
        for annot in sorted(data_dir.glob(f"{rec.id}.*.events.csv")):
            rater = annot.name[len(rec.id) + 1 : -len(".events.csv")]
            if rater == "artifacts":
                continue
            raters[rater] = load_annotations(annot, rec.duration, rater=rater)
        if not raters:
            raise DataError(f"{rec.id}: no annotation sidecars found")
        if "truth" in raters:
            truth = raters["truth"]
        elif len(raters) >= 2:
            truth = consensus(list(raters.values()))
        else:
            truth = next(iter(raters.values()))
        fm, grid, bad = prepare_recording(rec, montage, hop_s=hop_s)
        labels = mdl.epoch_labels(truth, grid)
        out.append(
            NeonateData(
                id=rec.id,
                fm=fm,
                labels=labels,
                truth=truth,
                raters=raters,
                bad=bad,
                grid=grid,
                duration_s=rec.duration,
            )
        )
    return out


def corpus_rows(data: list[NeonateData], ids=None):
    """Stack feature rows, per-row labels and bad flags for a set of ids."""
    if ids is None:
        ids = [d.id for d in data]
    ids = set(ids)
    chosen = [d for d in data if d.id in ids]
    values = np.concatenate([d.fm.values for d in chosen])
    labels = np.concatenate([d.row_labels for d in chosen])
    bad = np.concatenate([d.row_bad for d in chosen])
    return values, labels, bad


# ---------------------------------------------------------------------------
# Hyperparameter search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainSettings:
    c_grid: tuple[float, ...] = mdl.DEFAULT_C_GRID
    gamma_grid: tuple[float, ...] = mdl.DEFAULT_GAMMA_GRID
    kernel: str = "rbf"
    inner_folds: int = 3
    outer_folds: int = 10
    balance_ratio: float = 3.0
    max_train_rows: int = 4000
    tol: float = 1e-3
    hop_s: float = 4.0
    min_dur_s: float = 10.0
    k_grid: tuple[int, ...] = (3, 5, 9)
    dist_quantiles: tuple[float, ...] = (99.0, 99.5, 99.9)
    amp_quantiles: tuple[float, ...] = (99.0, 99.5, 99.9)
    ma_grid: tuple[int, ...] = (1, 3, 5)
    threshold_grid: tuple[float, ...] = (-0.5, -0.25, 0.0, 0.25, 0.5)
    collar_grid: tuple[float, ...] = (0.0, 8.0, 16.0)
    max_reference: int = 20000
    bootstrap_iters: int = 1000
    backend: str | None = None


def _assemble_fold(
    data: list[NeonateData],
    train_ids,
    settings: TrainSettings,
    seed: int,
    augment: tuple[np.ndarray, np.ndarray] | None,
):
    """Balanced (optionally augmented) training matrix for one fold."""
    values, labels, bad = corpus_rows(data, train_ids)
    if not labels.any():
        raise DataError(
            f"fold training complement {sorted(train_ids)} has no seizure epochs"
        )
    rows = mdl.balanced_rows(
        labels,
        ratio=settings.balance_ratio,
        max_rows=settings.max_train_rows,
        seed=seed,
        exclude=bad,
    )
    train_values, train_labels = values[rows], labels[rows]
    if augment is not None:
        train_values, train_labels = mdl.interleave_halves(
            train_values, train_labels, augment[0], augment[1]
        )
        if not train_labels.any() or train_labels.all():
            raise DataError("augmented training set lost one of the classes")
    stats = feats.compute_stats(train_values)
    return train_values, train_labels, stats, values, labels


def hyper_search(
    data: list[NeonateData],
    settings: TrainSettings,
    seed: int,
    augment: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[float, float, list[dict]]:
    """Pick (C, gamma) by concatenated kappa over inner cross-validation.

    Inner predictions are post-processed with default parameters and no
    outlier gate; the full gate/post-processing search happens later, on
    the outer cross-validated statistics.
    """
    ids = [d.id for d in data]
    plan = mdl.make_folds(ids, n_folds=settings.inner_folds, seed=seed + 1)
    default_pp = pp.PostprocParams(min_dur_s=settings.min_dur_s)
    by_id = {d.id: d for d in data}

    counts: dict[tuple[float, float], object] = {}
    for fold in range(plan.n_folds):
        train_values, train_labels, stats, _, _ = _assemble_fold(
            data, plan.training_ids(fold), settings, seed + 100 + fold, augment
        )
        x = feats.normalize_values(train_values, stats)[:, : feats.N_FEATURES]
        y = np.where(train_labels, 1.0, -1.0)
        test = [by_id[i] for i in plan.fold_ids(fold)]
        test_rows = {
            d.id: feats.normalize_values(d.fm.values, stats)[:, : feats.N_FEATURES]
            for d in test
        }
        for gamma in settings.gamma_grid:
            k = mdl.kernel_matrix(x, x, settings.kernel, gamma)
            for c in settings.c_grid:
                alpha, bias, gap, _ = _solve(k, y, c, settings)
                sv = alpha > 0
                coef = alpha[sv] * y[sv]
                svx = x[sv]
                for d in test:
                    margins = mdl.decision_values(
                        svx, coef, bias, test_rows[d.id], settings.kernel, gamma
                    )
                    stats_grid = margins.reshape(d.fm.n_channels, d.fm.n_epochs)
                    mask = pp.postprocess(
                        stats_grid, None, d.bad, default_pp, d.grid, d.duration_s
                    )
                    c_counts = confusion(mask, d.truth)
                    key = (c, gamma)
                    counts[key] = c_counts if key not in counts else counts[key] + c_counts

    table = []
    best = None
    for gamma in settings.gamma_grid:
        for c in settings.c_grid:
            cc = counts[(c, gamma)]
            kappa = kappa_from_counts(cc.tp, cc.tn, cc.fp, cc.fn)
            table.append({"c": c, "gamma": gamma, "kappa": kappa})
            if best is None or kappa > best["kappa"]:
                best = table[-1]
    return best["c"], best["gamma"], table


def _solve(k, y, c, settings: TrainSettings):
    from . import smo

    return smo.smo_solve(k, y, c, tol=settings.tol, backend=settings.backend)


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------


@dataclass
class CvResult:
    records: list[og.CvRecord]
    fold_models: dict[int, mdl.SdaModel]
    plan: mdl.FoldPlan


def cross_validate(
    data: list[NeonateData],
    plan: mdl.FoldPlan,
    c: float,
    gamma: float,
    settings: TrainSettings,
    seed: int,
    augment: tuple[np.ndarray, np.ndarray] | None = None,
) -> CvResult:
    """Per-neonate decision statistics from leave-fold-out models.

    Each fold also yields the kNN distances and the per-fold threshold
    candidates the calibration grid search needs, all computed without the
    held-out neonates.
    """
    by_id = {d.id: d for d in data}
    missing = [i for i in plan.assignments if i not in by_id]
    if missing:
        raise DataError(f"fold plan covers unknown neonates {missing}")
    if set(by_id) - set(plan.assignments):
        raise DataError("fold plan does not cover every neonate")

    records = []
    fold_models = {}
    for fold in range(plan.n_folds):
        train_ids = plan.training_ids(fold)
        train_values, train_labels, stats, full_values, _ = _assemble_fold(
            data, train_ids, settings, seed + 200 + fold, augment
        )
        x = feats.normalize_values(train_values, stats)[:, : feats.N_FEATURES]
        y = np.where(train_labels, 1.0, -1.0)
        fit = mdl.fit_svm(
            x, y, c, gamma, kernel=settings.kernel, tol=settings.tol,
            backend=settings.backend,
        )
        fold_models[fold] = mdl.SdaModel(
            kernel=settings.kernel,
            gamma=gamma,
            c=c,
            support_vectors=fit.support_vectors,
            sv_coef=fit.sv_coef,
            bias=fit.bias,
            norm_stats=stats,
            postproc=pp.PostprocParams(min_dur_s=settings.min_dur_s),
            outlier=None,
            seed=seed,
            hop_s=settings.hop_s,
            meta={"fold": fold, "train_ids": train_ids, "n_sv": fit.n_sv},
        )

        reference_pool = full_values
        if augment is not None:
            reference_pool = np.concatenate([full_values, augment[0]])
        ref_norm = feats.normalize_values(reference_pool, stats)
        ref = ref_norm[:, : feats.N_FEATURES]
        if ref.shape[0] > settings.max_reference:
            rng = np.random.default_rng(seed + 300 + fold)
            idx = np.sort(
                rng.choice(ref.shape[0], size=settings.max_reference, replace=False)
            )
            ref = ref[idx]
            ref_amp = reference_pool[idx, feats.N_FEATURES]
        else:
            ref_amp = reference_pool[:, feats.N_FEATURES]

        within = og.kth_neighbor_distances_multi(
            ref, ref, settings.k_grid, exclude_self=True
        )
        dist_thresholds = {
            (k, q): float(np.percentile(within[k], q))
            for k in settings.k_grid
            for q in settings.dist_quantiles
        }
        amp_thresholds = {
            q: float(np.percentile(ref_amp, q)) for q in settings.amp_quantiles
        }

        for nid in plan.fold_ids(fold):
            d = by_id[nid]
            x_test = feats.normalize_values(d.fm.values, stats)[:, : feats.N_FEATURES]
            margins = mdl.decision_values(
                fit.support_vectors, fit.sv_coef, fit.bias, x_test,
                settings.kernel, gamma,
            )
            dists = og.kth_neighbor_distances_multi(x_test, ref, settings.k_grid)
            records.append(
                og.CvRecord(
                    neonate_id=nid,
                    stats=margins.reshape(d.fm.n_channels, d.fm.n_epochs),
                    max_amp=d.fm.as_grid(feats.MAX_AMP_NAME),
                    bad=d.bad,
                    kth_dists={
                        k: v.reshape(d.fm.n_channels, d.fm.n_epochs)
                        for k, v in dists.items()
                    },
                    dist_thresholds=dist_thresholds,
                    amp_thresholds=amp_thresholds,
                    truth=d.truth,
                    grid=d.grid,
                )
            )
    records.sort(key=lambda r: r.neonate_id)
    return CvResult(records=records, fold_models=fold_models, plan=plan)


def cv_evaluation(
    cv: CvResult, calib: og.CalibrationResult, iters: int, seed: int
) -> MetricsReport:
    """Evaluate the calibrated pipeline on the cross-validated statistics."""
    items = []
    for rec in cv.records:
        flags = rec.kth_dists[calib.gate.k] > rec.dist_thresholds[
            (calib.gate.k, calib.gate.dist_quantile)
        ]
        flags |= rec.max_amp > rec.amp_thresholds[calib.gate.amp_quantile]
        mask = pp.postprocess(
            rec.stats, flags, rec.bad, calib.postproc, rec.grid, rec.truth.duration
        )
        trace = pp.second_trace(
            rec.stats, flags, rec.bad, calib.postproc, rec.grid, rec.truth.duration
        )
        items.append(
            NeonateEval(id=rec.neonate_id, pred=mask, truth=rec.truth, trace=trace)
        )
    return evaluate_corpus(items, iters=iters, seed=seed)


# ---------------------------------------------------------------------------
# Full training pipeline
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: mdl.SdaModel
    report: MetricsReport
    cv: CvResult
    calibration: og.CalibrationResult
    hyper_table: list[dict] = field(default_factory=list)


def train_pipeline(
    data: list[NeonateData],
    settings: TrainSettings,
    seed: int,
    augment: tuple[np.ndarray, np.ndarray] | None = None,
) -> TrainResult:
    """Hyperparameter search, outer CV, calibration and the final model."""
    if len(data) < 2:
        raise DataError("training needs at least two neonates")
    n_with_seizure = sum(1 for d in data if d.labels.any())
    if n_with_seizure < 2:
        raise DataError(
            "training needs seizure epochs from at least two neonates, "
            f"found {n_with_seizure}"
        )

    c, gamma, hyper_table = hyper_search(data, settings, seed, augment=augment)
    logger.info("selected C=%g gamma=%g", c, gamma)

    plan = mdl.make_folds([d.id for d in data], n_folds=settings.outer_folds, seed=seed)
    cv = cross_validate(data, plan, c, gamma, settings, seed, augment=augment)
    calib = og.calibrate(
        cv.records,
        k_grid=settings.k_grid,
        dist_quantiles=settings.dist_quantiles,
        amp_quantiles=settings.amp_quantiles,
        ma_grid=settings.ma_grid,
        threshold_grid=settings.threshold_grid,
        collar_grid=settings.collar_grid,
        min_dur_s=settings.min_dur_s,
    )
    logger.info(
        "calibrated gate k=%d dist_q=%g amp_q=%g; postproc %s; cv kappa %.3f",
        calib.gate.k,
        calib.gate.dist_quantile,
        calib.gate.amp_quantile,
        calib.postproc,
        calib.kappa,
    )
    report = cv_evaluation(cv, calib, iters=settings.bootstrap_iters, seed=seed)

    all_ids = [d.id for d in data]
    train_values, train_labels, stats, full_values, _ = _assemble_fold(
        data, all_ids, settings, seed + 999, augment
    )
    x = feats.normalize_values(train_values, stats)[:, : feats.N_FEATURES]
    fit = mdl.fit_svm(
        x,
        np.where(train_labels, 1.0, -1.0),
        c,
        gamma,
        kernel=settings.kernel,
        tol=settings.tol,
        backend=settings.backend,
    )
    reference_pool = full_values
    if augment is not None:
        reference_pool = np.concatenate([full_values, augment[0]])
    outlier = og.fit_params(
        feats.normalize_values(reference_pool, stats),
        calib.gate,
        max_reference=settings.max_reference,
        seed=seed,
    )
    model = mdl.SdaModel(
        kernel=settings.kernel,
        gamma=gamma,
        c=c,
        support_vectors=fit.support_vectors,
        sv_coef=fit.sv_coef,
        bias=fit.bias,
        norm_stats=stats,
        postproc=calib.postproc,
        outlier=outlier,
        seed=seed,
        hop_s=settings.hop_s,
        meta={
            "n_sv": fit.n_sv,
            "n_train_rows": int(train_labels.size),
            "cv_kappa": calib.kappa,
            "augmented": augment is not None,
        },
    )
    return TrainResult(
        model=model, report=report, cv=cv, calibration=calib, hyper_table=hyper_table
    )


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------


@dataclass
class Detection:
    mask: AnnotationMask
    events: list[tuple[int, int]]
    trace: np.ndarray
    stats: np.ndarray
    outliers: np.ndarray
    grid: EpochGrid


def detect(model: mdl.SdaModel, rec: Recording, montage: Montage = DEFAULT_MONTAGE) -> Detection:
    """Annotate one raw recording with a trained model."""
    fm, grid, bad = prepare_recording(rec, montage, hop_s=model.hop_s)
    stats = mdl.decision_statistic(model, fm)
    if model.outlier is not None:
        normed = feats.normalize_values(fm.values, model.norm_stats)
        flags = og.outlier_flags(normed, model.outlier)
        outliers = flags.reshape(fm.n_channels, fm.n_epochs)
    else:
        outliers = np.zeros_like(stats, dtype=bool)
    mask = pp.postprocess(
        stats, outliers, bad, model.postproc, grid, rec.duration, rater="sda"
    )
    trace = pp.second_trace(stats, outliers, bad, model.postproc, grid, rec.duration)
    return Detection(
        mask=mask,
        events=pp.extract_events(mask),
        trace=trace,
        stats=stats,
        outliers=outliers,
        grid=grid,
    )


# ---------------------------------------------------------------------------
# Re-training with augmentation
# ---------------------------------------------------------------------------


def build_augmentation(
    new_data: list[NeonateData],
    n_seizure: int,
    n_nonseizure: int,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample an augmentation set from a new corpus.

    Seizure rows come from consensus-labelled seizure epochs anywhere in
    the recordings; non-seizure rows only from epochs whose span lies in
    the second half of their recording (where novel background patterns
    live). Sampling is seeded and capped by availability.
    """
    seiz_rows = []
    nonseiz_rows = []
    for d in new_data:
        values = d.fm.values
        labels = d.row_labels
        bad = d.row_bad
        epoch_idx = d.fm.epoch_index
        starts = np.array([d.grid.start_second(int(e)) for e in epoch_idx])
        second_half = starts >= d.duration_s / 2.0
        seiz_rows.append(values[labels & ~bad])
        nonseiz_rows.append(values[~labels & ~bad & second_half])
    seiz = np.concatenate(seiz_rows)
    nonseiz = np.concatenate(nonseiz_rows)
    if seiz.shape[0] == 0:
        raise DataError("augmentation corpus has no seizure epochs")
    rng = np.random.default_rng(seed)
    take_s = min(n_seizure, seiz.shape[0])
    take_n = min(n_nonseizure, nonseiz.shape[0])
    si = np.sort(rng.choice(seiz.shape[0], size=take_s, replace=False))
    ni = np.sort(rng.choice(nonseiz.shape[0], size=take_n, replace=False))
    values = np.concatenate([seiz[si], nonseiz[ni]])
    labels = np.concatenate(
        [np.ones(take_s, dtype=bool), np.zeros(take_n, dtype=bool)]
    )
    return values, labels


def retrain_pipeline(
    base_data: list[NeonateData],
    new_data: list[NeonateData],
    settings: TrainSettings,
    seed: int,
) -> TrainResult:
    """Re-train with interleaved augmentation (same search as training).

    The new set is sized like the base balanced training set, and the
    cross-validation keeps base neonates as folds so primary measures stay
    comparable with the original model's.
    """
    base_values, base_labels, base_bad = corpus_rows(base_data)
    base_rows = mdl.balanced_rows(
        base_labels,
        ratio=settings.balance_ratio,
        max_rows=settings.max_train_rows,
        seed=seed + 999,
        exclude=base_bad,
    )
    n_seiz = int(base_labels[base_rows].sum())
    n_nonseiz = int(base_rows.size - n_seiz)
    augment = build_augmentation(new_data, n_seiz, n_nonseiz, seed=seed + 17)
    return train_pipeline(base_data, settings, seed, augment=augment)
