"""Performance measures and statistical machinery.

Per-second measures (confusion counts, AUC, Cohen's kappa), event measures
(detection rate, false detections per hour), neonate-level bootstrap
confidence intervals, non-inferiority via kappa differences, and the
Wilcoxon / Mann-Whitney rank tests used for paired and unpaired
comparisons. Rank tests use the normal approximation with tie and
continuity corrections; exact enumeration lives in the test suite as the
oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DataError, UndefinedMetricError
from .signal_io import AnnotationMask


# ---------------------------------------------------------------------------
# Per-second measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp,
            self.tn + other.tn,
            self.fp + other.fp,
            self.fn + other.fn,
        )

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def sensitivity(self) -> float | None:
        denom = self.tp + self.fn
        return self.tp / denom if denom else None

    @property
    def specificity(self) -> float | None:
        denom = self.tn + self.fp
        return self.tn / denom if denom else None

    @property
    def accuracy(self) -> float | None:
        return (self.tp + self.tn) / self.total if self.total else None


def _mask_array(mask) -> np.ndarray:
    if isinstance(mask, AnnotationMask):
        return mask.mask
    return np.asarray(mask, dtype=bool)


def confusion(pred, truth) -> ConfusionCounts:
    """Second-by-second comparison of a prediction to a reference."""
    p = _mask_array(pred)
    t = _mask_array(truth)
    if p.shape != t.shape:
        raise DataError(f"mask lengths differ: {p.shape} vs {t.shape}")
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & t)),
        tn=int(np.count_nonzero(~p & ~t)),
        fp=int(np.count_nonzero(p & ~t)),
        fn=int(np.count_nonzero(~p & t)),
    )


def auc(scores: np.ndarray, truth) -> float:
    """Area under the ROC curve (trapezoidal over all thresholds).

    Computed via midranks, which equals the pairwise comparison statistic
    with tied pairs counted one half.
    """
    t = _mask_array(truth)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != t.shape:
        raise DataError(f"score/label lengths differ: {scores.shape} vs {t.shape}")
    n_pos = int(np.count_nonzero(t))
    n_neg = t.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC is undefined without both classes")
    ranks = rankdata(scores)
    return float((ranks[t].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def cohen_kappa(a, b) -> float:
    """Chance-corrected agreement between two binary masks.

    Degenerate convention: when expected agreement is 1 (both masks
    constant on the same class) return 1.
    """
    x = _mask_array(a)
    y = _mask_array(b)
    if x.shape != y.shape:
        raise DataError(f"mask lengths differ: {x.shape} vs {y.shape}")
    if x.size == 0:
        raise DataError("kappa is undefined on empty masks")
    c = confusion(x, y)
    return kappa_from_counts(c.tp, c.tn, c.fp, c.fn)


def kappa_from_counts(tp: int, tn: int, fp: int, fn: int) -> float:
    n = tp + tn + fp + fn
    po = (tp + tn) / n
    pa = (tp + fp) / n
    pb = (tp + fn) / n
    pe = pa * pb + (1.0 - pa) * (1.0 - pb)
    if pe == 1.0:
        return 1.0 if po == 1.0 else 0.0
    return (po - pe) / (1.0 - pe)


# ---------------------------------------------------------------------------
# Event-based measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EventMetrics:
    sdr: float | None
    fd_per_h: float
    n_truth: int
    n_detected: int
    n_pred: int
    n_false: int


def _overlaps(a: tuple[float, float], b: tuple[float, float]) -> bool:
    # Any intersection of at least one second counts as overlap.
    return min(a[1], b[1]) - max(a[0], b[0]) >= 1.0


def event_metrics(pred_events, truth_events, duration_h: float) -> EventMetrics:
    """Seizure detection rate and false detections per hour.

    A truth event is detected if any predicted event overlaps it; multiple
    detections inside one truth event are not false detections. SDR is
    None when there are no truth events.
    """
    if duration_h <= 0:
        raise DataError(f"duration must be positive, got {duration_h} h")
    pred_events = list(pred_events)
    truth_events = list(truth_events)
    detected = sum(
        1 for te in truth_events if any(_overlaps(pe, te) for pe in pred_events)
    )
    false = sum(
        1 for pe in pred_events if not any(_overlaps(pe, te) for te in truth_events)
    )
    sdr = detected / len(truth_events) if truth_events else None
    return EventMetrics(
        sdr=sdr,
        fd_per_h=false / duration_h,
        n_truth=len(truth_events),
        n_detected=detected,
        n_pred=len(pred_events),
        n_false=false,
    )


# ---------------------------------------------------------------------------
# Bootstrap
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BootstrapResult:
    point: float
    lo: float
    hi: float
    redraws: int


def bootstrap_ci(
    items: Sequence,
    statistic: Callable[[Sequence], float],
    iters: int = 1000,
    seed: int = 0,
    max_attempts_per_iter: int = 100,
) -> BootstrapResult:
    """Percentile CI by resampling neonates with replacement.

    Each iteration draws from its own seeded substream, so results do not
    depend on execution order. Resamples on which the statistic is
    undefined are redrawn (within the same substream) and counted.
    """
    items = list(items)
    n = len(items)
    if n == 0:
        raise DataError("bootstrap needs at least one item")
    point = float(statistic(items))
    children = np.random.SeedSequence(seed).spawn(iters)
    values = np.empty(iters)
    redraws = 0
    for i in range(iters):
        rng = np.random.default_rng(children[i])
        for _ in range(max_attempts_per_iter):
            idx = rng.integers(0, n, size=n)
            sample = [items[int(j)] for j in idx]
            try:
                values[i] = statistic(sample)
                break
            except UndefinedMetricError:
                redraws += 1
        else:
            raise DataError(
                f"bootstrap iteration {i}: statistic undefined on "
                f"{max_attempts_per_iter} consecutive resamples"
            )
    lo, hi = np.percentile(values, [2.5, 97.5])
    return BootstrapResult(point=point, lo=float(lo), hi=float(hi), redraws=redraws)


# ---------------------------------------------------------------------------
# Non-inferiority
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeltaKappaResult:
    """Bootstrap of kappa(human, human) - kappa(SDA, human) for one pairing."""

    expert: str
    point: float
    median: float
    lo: float
    hi: float
    non_inferior: bool


def noninferiority_delta_kappa(
    sda: dict[str, AnnotationMask],
    e1: dict[str, AnnotationMask],
    e2: dict[str, AnnotationMask],
    iters: int = 1000,
    seed: int = 0,
) -> tuple[DeltaKappaResult, DeltaKappaResult]:
    """Non-inferiority of the SDA annotation against each expert pairing.

    The verdict is non-inferior unless the whole CI lies above zero
    (a CI strictly below zero means the SDA agrees better than the experts
    do with each other, which is not inferior either).
    """
    ids = sorted(sda)
    for name, masks in (("e1", e1), ("e2", e2)):
        missing = [i for i in ids if i not in masks]
        if missing or set(masks) != set(ids):
            raise DataError(f"rater {name} does not cover the same neonates")
    triples = [
        (sda[i].mask, e1[i].mask, e2[i].mask) for i in ids
    ]

    def deltas(sample):
        s = np.concatenate([t[0] for t in sample])
        a = np.concatenate([t[1] for t in sample])
        b = np.concatenate([t[2] for t in sample])
        k_hh = cohen_kappa(a, b)
        return k_hh - cohen_kappa(s, a), k_hh - cohen_kappa(s, b)

    point1, point2 = deltas(triples)
    children = np.random.SeedSequence(seed).spawn(iters)
    d1 = np.empty(iters)
    d2 = np.empty(iters)
    n = len(triples)
    for i in range(iters):
        rng = np.random.default_rng(children[i])
        idx = rng.integers(0, n, size=n)
        d1[i], d2[i] = deltas([triples[int(j)] for j in idx])

    results = []
    for name, point, d in (("e1", point1, d1), ("e2", point2, d2)):
        lo, hi = np.percentile(d, [2.5, 97.5])
        results.append(
            DeltaKappaResult(
                expert=name,
                point=float(point),
                median=float(np.median(d)),
                lo=float(lo),
                hi=float(hi),
                non_inferior=bool(lo <= 0.0),
            )
        )
    return results[0], results[1]


# ---------------------------------------------------------------------------
# Rank tests (normal approximation; exact enumeration is the test oracle)
# ---------------------------------------------------------------------------


def _two_sided_p(diff: float, sigma: float) -> float:
    if sigma <= 0:
        return 1.0
    z = (abs(diff) - 0.5) / sigma
    if z < 0:
        z = 0.0
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


def wilcoxon_signed_rank(x, y) -> float:
    """Two-sided Wilcoxon signed-rank p-value for paired samples.

    Zero differences are discarded; if all differences are zero the
    p-value is 1. Requires at least five nonzero differences.
    """
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    d = d[d != 0]
    n = d.size
    if n == 0:
        return 1.0
    if n < 5:
        raise DataError(f"need >= 5 nonzero differences, got {n}")
    ranks = rankdata(np.abs(d))
    t_plus = float(ranks[d > 0].sum())
    mu = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    tie_term = float(((tie_counts**3 - tie_counts) / 48.0).sum())
    sigma2 = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    return _two_sided_p(t_plus - mu, math.sqrt(max(sigma2, 0.0)))


def mann_whitney_u(x, y) -> float:
    """Two-sided Mann-Whitney U p-value for unpaired samples."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n1, n2 = x.size, y.size
    if n1 == 0 or n2 == 0:
        raise DataError("both samples must be nonempty")
    combined = np.concatenate([x, y])
    ranks = rankdata(combined)
    u1 = float(ranks[:n1].sum()) - n1 * (n1 + 1) / 2.0
    mu = n1 * n2 / 2.0
    n = n1 + n2
    _, tie_counts = np.unique(combined, return_counts=True)
    tie_term = float((tie_counts**3 - tie_counts).sum()) / (n * (n - 1))
    sigma2 = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    return _two_sided_p(u1 - mu, math.sqrt(max(sigma2, 0.0)))


# ---------------------------------------------------------------------------
# Corpus-level report
# ---------------------------------------------------------------------------


@dataclass
class NeonateEval:
    """One neonate's prediction bundle for corpus evaluation."""

    id: str
    pred: AnnotationMask
    truth: AnnotationMask
    trace: np.ndarray | None = None

    @property
    def duration_h(self) -> float:
        return self.truth.duration / 3600.0


def _concat_masks(items: Sequence[NeonateEval]):
    pred = np.concatenate([it.pred.mask for it in items])
    truth = np.concatenate([it.truth.mask for it in items])
    return pred, truth


def concat_kappa(items: Sequence[NeonateEval]) -> float:
    pred, truth = _concat_masks(items)
    return cohen_kappa(pred, truth)


def concat_sensitivity(items: Sequence[NeonateEval]) -> float:
    pred, truth = _concat_masks(items)
    value = confusion(pred, truth).sensitivity
    if value is None:
        raise UndefinedMetricError("no seizure seconds in resample")
    return value


def concat_specificity(items: Sequence[NeonateEval]) -> float:
    pred, truth = _concat_masks(items)
    value = confusion(pred, truth).specificity
    if value is None:
        raise UndefinedMetricError("no non-seizure seconds in resample")
    return value


def concat_auc(items: Sequence[NeonateEval]) -> float:
    if any(it.trace is None for it in items):
        raise UndefinedMetricError("decision traces unavailable")
    scores = np.concatenate([it.trace for it in items])
    truth = np.concatenate([it.truth.mask for it in items])
    return auc(scores, truth)


def _pooled_events(items: Sequence[NeonateEval]):
    from .postprocess import extract_events

    per = []
    for it in items:
        per.append((extract_events(it.pred), extract_events(it.truth), it.duration_h))
    return per


def concat_sdr(items: Sequence[NeonateEval]) -> float:
    detected = total = 0
    for pred_ev, truth_ev, dur_h in _pooled_events(items):
        m = event_metrics(pred_ev, truth_ev, dur_h)
        detected += m.n_detected
        total += m.n_truth
    if total == 0:
        raise UndefinedMetricError("no truth events in resample")
    return detected / total


def concat_fd_per_h(items: Sequence[NeonateEval]) -> float:
    false = 0
    hours = 0.0
    for pred_ev, truth_ev, dur_h in _pooled_events(items):
        m = event_metrics(pred_ev, truth_ev, dur_h)
        false += m.n_false
        hours += dur_h
    return false / hours


CONCAT_STATISTICS: dict[str, Callable] = {
    "auc": concat_auc,
    "sensitivity": concat_sensitivity,
    "specificity": concat_specificity,
    "kappa": concat_kappa,
    "sdr": concat_sdr,
    "fd_per_h": concat_fd_per_h,
}


@dataclass
class MetricsReport:
    n_neonates: int
    n_with_seizure: int
    per_neonate: list[dict]
    concatenated: dict[str, dict]
    bootstrap_iters: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "n_neonates": self.n_neonates,
            "n_with_seizure": self.n_with_seizure,
            "per_neonate": self.per_neonate,
            "concatenated": self.concatenated,
            "bootstrap_iters": self.bootstrap_iters,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            n_neonates=d["n_neonates"],
            n_with_seizure=d["n_with_seizure"],
            per_neonate=d["per_neonate"],
            concatenated=d["concatenated"],
            bootstrap_iters=d["bootstrap_iters"],
            seed=d["seed"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def neonate_values(self, metric: str) -> list[float]:
        return [
            row[metric] for row in self.per_neonate if row.get(metric) is not None
        ]

    def to_text(self) -> str:
        def fmt(v):
            return "-" if v is None else f"{v:.3f}"

        lines = [
            f"neonates: {self.n_neonates} total, {self.n_with_seizure} with seizure",
            "",
            "concatenated (value, 95% CI):",
        ]
        for name in ("auc", "sensitivity", "specificity", "sdr", "fd_per_h", "kappa"):
            entry = self.concatenated.get(name)
            if entry is None:
                lines.append(f"  c{name:<12} -")
            else:
                lines.append(
                    f"  c{name:<12} {fmt(entry['value'])} "
                    f"({fmt(entry['lo'])}-{fmt(entry['hi'])})"
                )
        lines.append("")
        header = f"  {'id':<12}{'auc':>8}{'sens':>8}{'spec':>8}{'sdr':>8}{'fd/h':>8}{'kappa':>8}"
        lines.append("per neonate:")
        lines.append(header)
        for row in self.per_neonate:
            lines.append(
                f"  {row['id']:<12}"
                f"{fmt(row.get('auc')):>8}{fmt(row.get('sensitivity')):>8}"
                f"{fmt(row.get('specificity')):>8}{fmt(row.get('sdr')):>8}"
                f"{fmt(row.get('fd_per_h')):>8}{fmt(row.get('kappa')):>8}"
            )
        return "\n".join(lines) + "\n"


def evaluate_corpus(
    items: Sequence[NeonateEval], iters: int = 1000, seed: int = 0
) -> MetricsReport:
    """Per-neonate measures plus concatenated measures with bootstrap CIs."""
    items = sorted(items, key=lambda it: it.id)
    if not items:
        raise DataError("no neonates to evaluate")
    from .postprocess import extract_events

    per_neonate = []
    n_seiz = 0
    for it in items:
        counts = confusion(it.pred, it.truth)
        row: dict = {
            "id": it.id,
            "sensitivity": counts.sensitivity,
            "specificity": counts.specificity,
            "kappa": cohen_kappa(it.pred, it.truth),
        }
        truth_events = extract_events(it.truth)
        m = event_metrics(extract_events(it.pred), truth_events, it.duration_h)
        row["sdr"] = m.sdr
        row["fd_per_h"] = m.fd_per_h
        if truth_events:
            n_seiz += 1
        row["auc"] = None
        if it.trace is not None:
            try:
                row["auc"] = auc(it.trace, it.truth)
            except UndefinedMetricError:
                pass
        per_neonate.append(row)

    concatenated = {}
    for name, stat in CONCAT_STATISTICS.items():
        try:
            res = bootstrap_ci(items, stat, iters=iters, seed=seed)
        except (UndefinedMetricError, DataError):
            continue
        concatenated[name] = {
            "value": res.point,
            "lo": res.lo,
            "hi": res.hi,
            "redraws": res.redraws,
        }
    return MetricsReport(
        n_neonates=len(items),
        n_with_seizure=n_seiz,
        per_neonate=per_neonate,
        concatenated=concatenated,
        bootstrap_iters=iters,
        seed=seed,
    )


def compare_reports(current: MetricsReport, baseline: MetricsReport) -> dict:
    """Generalizability / paired comparison of per-neonate measures.

    Identical neonate id sets get the paired Wilcoxon signed-rank test;
    disjoint cohorts get the unpaired Mann-Whitney U test. AUC is the
    primary measure; sensitivity and specificity are reported alongside.
    """
    ids_a = [row["id"] for row in current.per_neonate]
    ids_b = [row["id"] for row in baseline.per_neonate]
    paired = ids_a == ids_b
    out = {"paired": paired, "tests": {}}
    for metric in ("auc", "sensitivity", "specificity"):
        if paired:
            pairs = [
                (ra.get(metric), rb.get(metric))
                for ra, rb in zip(current.per_neonate, baseline.per_neonate)
            ]
            pairs = [(a, b) for a, b in pairs if a is not None and b is not None]
            if len(pairs) < 5:
                continue
            a_vals, b_vals = zip(*pairs)
            try:
                p = wilcoxon_signed_rank(a_vals, b_vals)
            except DataError:
                continue
            test = "wilcoxon_signed_rank"
            n = len(pairs)
        else:
            a_vals = current.neonate_values(metric)
            b_vals = baseline.neonate_values(metric)
            if not a_vals or not b_vals:
                continue
            p = mann_whitney_u(a_vals, b_vals)
            test = "mann_whitney_u"
            n = len(a_vals) + len(b_vals)
        out["tests"][metric] = {
            "test": test,
            "p_value": p,
            "n": n,
            "significant": p < 0.05,
        }
    if "auc" in out["tests"]:
        out["generalizes"] = not out["tests"]["auc"]["significant"]
    return out
