"""SVM decision core: kernel, SMO training, model container, fold plans.

Corpus-level orchestration (feature preparation, hyperparameter search,
cross-validation, calibration) lives in neosda.pipeline; this module owns
the model itself.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import features as feats
from . import smo
from .errors import ConvergenceError, DataError
from .features import FeatureMatrix, NormStats
from .outlier_gate import OutlierParams
from .postprocess import PostprocParams
from .preprocess import EpochGrid
from .signal_io import AnnotationMask

KERNELS = ("rbf", "linear")

DEFAULT_C_GRID = (0.1, 1.0, 10.0, 100.0)
DEFAULT_GAMMA_GRID = tuple(g / feats.N_FEATURES for g in (0.01, 0.1, 1.0))


def kernel_matrix(a: np.ndarray, b: np.ndarray, kernel: str, gamma: float) -> np.ndarray:
    """Gram matrix between row sets a and b."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if kernel == "linear":
        return a @ b.T
    if kernel == "rbf":
        sq = (
            np.einsum("ij,ij->i", a, a)[:, None]
            + np.einsum("ij,ij->i", b, b)[None, :]
            - 2.0 * (a @ b.T)
        )
        np.maximum(sq, 0.0, out=sq)
        if a is b or (a.shape == b.shape and np.shares_memory(a, b)):
            np.fill_diagonal(sq, 0.0)
        return np.exp(-gamma * sq)
    raise DataError(f"unknown kernel {kernel!r}; supported: {KERNELS}")


@dataclass
class SvmFit:
    """Dual solution restricted to the support set."""

    support_vectors: np.ndarray
    sv_coef: np.ndarray  # alpha_i * y_i
    bias: float
    gap: float
    n_iter: int
    n_sv: int


def fit_svm(
    x: np.ndarray,
    y: np.ndarray,
    c: float,
    gamma: float,
    kernel: str = "rbf",
    tol: float = 1e-3,
    max_iter: int | None = None,
    backend: str | None = None,
) -> SvmFit:
    """Train a binary SVM by SMO on normalized feature rows.

    y may be boolean or +/-1. Raises on single-class input and on
    non-convergence within the iteration cap.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y)
    if y.dtype == bool:
        y = np.where(y, 1.0, -1.0)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise DataError(f"{x.shape[0]} rows but {y.shape[0]} labels")
    if np.all(y > 0) or np.all(y < 0):
        raise DataError("single-class training input: both classes required")

    k = kernel_matrix(x, x, kernel, gamma)
    alpha, bias, gap, n_iter = smo.smo_solve(
        k, y, c, tol=tol, max_iter=max_iter, backend=backend
    )
    if gap >= tol:
        raise ConvergenceError(
            f"SMO did not converge after {n_iter} iterations; residual {gap:.3e}"
        )
    sv = alpha > 0
    return SvmFit(
        support_vectors=x[sv].copy(),
        sv_coef=(alpha[sv] * y[sv]),
        bias=bias,
        gap=gap,
        n_iter=n_iter,
        n_sv=int(sv.sum()),
    )


def decision_values(fit_sv: np.ndarray, fit_coef: np.ndarray, bias: float, x: np.ndarray, kernel: str, gamma: float) -> np.ndarray:
    return kernel_matrix(x, fit_sv, kernel, gamma) @ fit_coef + bias


# ---------------------------------------------------------------------------
# Model container
# ---------------------------------------------------------------------------


@dataclass
class SdaModel:
    """Everything needed to annotate a new recording."""

    kernel: str
    gamma: float
    c: float
    support_vectors: np.ndarray
    sv_coef: np.ndarray
    bias: float
    norm_stats: NormStats
    postproc: PostprocParams
    outlier: OutlierParams | None
    seed: int
    hop_s: float = 4.0
    feature_version: str = feats.FEATURE_VERSION
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.support_vectors = np.asarray(self.support_vectors, dtype=np.float64)
        self.sv_coef = np.asarray(self.sv_coef, dtype=np.float64)
        if self.kernel not in KERNELS:
            raise DataError(f"unknown kernel {self.kernel!r}")

    def decision_values(self, x_norm: np.ndarray) -> np.ndarray:
        return decision_values(
            self.support_vectors, self.sv_coef, self.bias, x_norm, self.kernel, self.gamma
        )

    def to_dict(self) -> dict:
        d = {
            "format": "neosda-model",
            "feature_version": self.feature_version,
            "kernel": self.kernel,
            "gamma": self.gamma,
            "c": self.c,
            "support_vectors": self.support_vectors.tolist(),
            "sv_coef": self.sv_coef.tolist(),
            "bias": self.bias,
            "norm_mean": self.norm_stats.mean.tolist(),
            "norm_sd": self.norm_stats.sd.tolist(),
            "postproc": {
                "ma_len": self.postproc.ma_len,
                "threshold": self.postproc.threshold,
                "collar_s": self.postproc.collar_s,
                "min_dur_s": self.postproc.min_dur_s,
            },
            "seed": self.seed,
            "hop_s": self.hop_s,
            "meta": self.meta,
            "outlier": None,
        }
        if self.outlier is not None:
            d["outlier"] = {
                "k": self.outlier.k,
                "d_max": self.outlier.d_max,
                "amp_max": self.outlier.amp_max,
                "dist_quantile": self.outlier.dist_quantile,
                "amp_quantile": self.outlier.amp_quantile,
                "reference_set": self.outlier.reference_set.tolist(),
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SdaModel":
        if d.get("format") != "neosda-model":
            raise DataError("not a model file")
        outlier = None
        if d.get("outlier") is not None:
            o = d["outlier"]
            outlier = OutlierParams(
                k=o["k"],
                d_max=o["d_max"],
                amp_max=o["amp_max"],
                reference_set=np.asarray(o["reference_set"]),
                dist_quantile=o.get("dist_quantile"),
                amp_quantile=o.get("amp_quantile"),
            )
        return cls(
            kernel=d["kernel"],
            gamma=d["gamma"],
            c=d["c"],
            support_vectors=np.asarray(d["support_vectors"]),
            sv_coef=np.asarray(d["sv_coef"]),
            bias=d["bias"],
            norm_stats=NormStats(
                mean=np.asarray(d["norm_mean"]),
                sd=np.asarray(d["norm_sd"]),
                feature_version=d["feature_version"],
            ),
            postproc=PostprocParams(**d["postproc"]),
            outlier=outlier,
            seed=d["seed"],
            hop_s=d["hop_s"],
            feature_version=d["feature_version"],
            meta=d.get("meta", {}),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "SdaModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def train(
    fm: FeatureMatrix,
    labels: np.ndarray,
    c: float,
    gamma: float,
    norm_stats: NormStats | None = None,
    kernel: str = "rbf",
    tol: float = 1e-3,
    seed: int = 0,
    postproc: PostprocParams | None = None,
    backend: str | None = None,
) -> SdaModel:
    """Train an SdaModel on one feature matrix with per-epoch labels.

    labels has one boolean per epoch (seizure iff at least half of its
    seconds are consensus seizure); every channel row inherits its epoch's
    label. Support vectors are stored normalized.
    """
    labels = np.asarray(labels, dtype=bool)
    if labels.shape != (fm.n_epochs,):
        raise DataError(f"labels must be (n_epochs,), got {labels.shape}")
    if norm_stats is None:
        norm_stats = feats.compute_stats(fm.values)
    x = feats.normalize_values(fm.values, norm_stats)[:, : feats.N_FEATURES]
    y = labels[fm.epoch_index]
    fit = fit_svm(x, y, c, gamma, kernel=kernel, tol=tol, backend=backend)
    return SdaModel(
        kernel=kernel,
        gamma=gamma,
        c=c,
        support_vectors=fit.support_vectors,
        sv_coef=fit.sv_coef,
        bias=fit.bias,
        norm_stats=norm_stats,
        postproc=postproc if postproc is not None else PostprocParams(),
        outlier=None,
        seed=seed,
        meta={"n_sv": fit.n_sv, "n_iter": fit.n_iter, "gap": fit.gap},
    )


def decision_statistic(model: SdaModel, fm: FeatureMatrix) -> np.ndarray:
    """Raw SVM margins per (channel, epoch); no thresholding."""
    if fm.feature_version != model.feature_version:
        raise DataError(
            f"feature version mismatch: model {model.feature_version}, "
            f"matrix {fm.feature_version}"
        )
    x = feats.normalize_values(fm.values, model.norm_stats)[:, : feats.N_FEATURES]
    margins = model.decision_values(x)
    return margins.reshape(fm.n_channels, fm.n_epochs)


# ---------------------------------------------------------------------------
# Fold plans and training-set assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    assignments: dict[str, int]
    n_folds: int

    def fold_ids(self, fold: int) -> list[str]:
        return sorted(i for i, f in self.assignments.items() if f == fold)

    def training_ids(self, fold: int) -> list[str]:
        return sorted(i for i, f in self.assignments.items() if f != fold)


def make_folds(ids, n_folds: int = 10, seed: int = 0) -> FoldPlan:
    """Seeded partition of neonates into folds of near-equal size.

    Ids are sorted before shuffling, so the plan is independent of the
    caller's ordering.
    """
    ids = sorted(set(ids))
    if len(ids) < 2:
        raise DataError("need at least two neonates to build folds")
    n_folds = min(n_folds, len(ids))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    assignments = {ids[int(j)]: i % n_folds for i, j in enumerate(order)}
    return FoldPlan(assignments=assignments, n_folds=n_folds)


def epoch_labels(mask: AnnotationMask, grid: EpochGrid) -> np.ndarray:
    """Per-epoch label: seizure iff >= 50% of the epoch's seconds are."""
    out = np.zeros(grid.n_epochs, dtype=bool)
    for i in range(grid.n_epochs):
        lo, hi = grid.second_span(i)
        sec = mask.mask[int(lo) : min(int(hi), mask.duration)]
        if sec.size:
            out[i] = sec.mean() >= 0.5
    return out


def balanced_rows(
    labels: np.ndarray,
    ratio: float = 3.0,
    max_rows: int = 4000,
    seed: int = 0,
    exclude: np.ndarray | None = None,
) -> np.ndarray:
    """Seeded row selection: all seizure rows plus at most ratio times as
    many non-seizure rows, capped at max_rows (class ratio preserved).

    Returns sorted row indices so downstream training sees a stable order.
    """
    labels = np.asarray(labels, dtype=bool)
    keep = np.ones(labels.size, dtype=bool)
    if exclude is not None:
        keep &= ~np.asarray(exclude, dtype=bool)
    rng = np.random.default_rng(seed)
    pos = np.flatnonzero(labels & keep)
    neg = np.flatnonzero(~labels & keep)
    n_neg = min(neg.size, int(round(ratio * pos.size))) if pos.size else neg.size
    if n_neg < neg.size:
        neg = rng.choice(neg, size=n_neg, replace=False)
    idx = np.concatenate([pos, neg])
    if idx.size > max_rows:
        frac = max_rows / idx.size
        n_pos_keep = max(1, int(round(pos.size * frac))) if pos.size else 0
        n_neg_keep = max_rows - n_pos_keep
        pos_keep = rng.choice(pos, size=min(n_pos_keep, pos.size), replace=False)
        neg_keep = rng.choice(neg, size=min(n_neg_keep, neg.size), replace=False)
        idx = np.concatenate([pos_keep, neg_keep])
    return np.sort(idx)


def interleave_halves(
    base_values: np.ndarray,
    base_labels: np.ndarray,
    new_values: np.ndarray,
    new_labels: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Every second sample of the base set followed by every second sample
    of the new set, original order preserved: diversity up, size constant."""
    if new_values.shape[0] == 0:
        raise DataError("augmentation set is empty")
    values = np.concatenate([base_values[0::2], new_values[0::2]])
    labels = np.concatenate([base_labels[0::2], new_labels[0::2]])
    return values, labels
