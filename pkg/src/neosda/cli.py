"""Command-line surface: train, detect, evaluate, burden, synth, retrain.

Exit codes: 0 success, 2 validation/config error, 1 runtime error. Every
output directory gets a manifest.json recording the package version, the
seed, the effective config and SHA-256 hashes of the inputs, so reruns are
byte-comparable.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import clinical
from . import config as cfgmod
from . import evaluation as ev
from . import model as mdl
from . import pipeline as pl
from . import postprocess as pp
from . import synth as synthmod
from .errors import ValidationError
from .signal_io import (
    AnnotationMask,
    load_annotations,
    load_bad_electrodes,
    read_edf,
    read_mask,
    write_events,
    write_mask,
)

logger = logging.getLogger(__name__)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _hash_inputs(paths) -> dict[str, str]:
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for f in sorted(p.rglob("*")):
                if f.is_file():
                    out[f"{p.name}/{f.relative_to(p)}"] = _sha256(f)
        elif p.is_file():
            out[p.name] = _sha256(p)
    return out


def _write_manifest(out_dir: Path, command: str, cfg: dict, inputs) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg["seed"],
        "config": cfg,
        "inputs": _hash_inputs(inputs),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True)
    )


def _write_trace(path: Path, trace: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["second", "stat"])
        for sec, val in enumerate(trace):
            writer.writerow([sec, repr(float(val))])


def _read_trace(path: Path) -> np.ndarray:
    values = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0] == "second":
                continue
            values.append(float(row[1]))
    return np.asarray(values)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(args, cfg) -> int:
    spec = cfgmod.synth_spec_from_config(cfg)
    out_dir = Path(args.out)
    written = synthmod.write_corpus(spec, out_dir)
    _write_manifest(out_dir, "synth", cfg, [])
    print(f"wrote {len(written)} synthetic recordings to {out_dir}")
    return 0


def _load_training_corpus(data_dir: str, cfg: dict):
    montage = cfgmod.montage_from_config(cfg)
    return pl.load_corpus(data_dir, montage=montage, hop_s=cfg["epoch"]["hop_s"])


def _write_train_outputs(out_dir: Path, result: pl.TrainResult) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    result.model.save(out_dir / "model.json")
    (out_dir / "cv_report.json").write_text(result.report.to_json())
    (out_dir / "cv_report.txt").write_text(result.report.to_text())
    (out_dir / "hyper_search.json").write_text(
        json.dumps(result.hyper_table, indent=2, sort_keys=True)
    )
    (out_dir / "calibration.json").write_text(
        json.dumps(
            {
                "gate": {
                    "k": result.calibration.gate.k,
                    "dist_quantile": result.calibration.gate.dist_quantile,
                    "amp_quantile": result.calibration.gate.amp_quantile,
                },
                "postproc": {
                    "ma_len": result.calibration.postproc.ma_len,
                    "threshold": result.calibration.postproc.threshold,
                    "collar_s": result.calibration.postproc.collar_s,
                    "min_dur_s": result.calibration.postproc.min_dur_s,
                },
                "kappa": result.calibration.kappa,
                "searched": result.calibration.table,
            },
            indent=2,
            sort_keys=True,
        )
    )
    folds_dir = out_dir / "folds"
    folds_dir.mkdir(exist_ok=True)
    for fold, fold_model in sorted(result.cv.fold_models.items()):
        fold_model.save(folds_dir / f"fold-{fold:02d}.json")


def cmd_train(args, cfg) -> int:
    data = _load_training_corpus(args.data, cfg)
    settings = cfgmod.settings_from_config(cfg)
    result = pl.train_pipeline(data, settings, seed=cfg["seed"])
    out_dir = Path(args.out)
    _write_train_outputs(out_dir, result)
    _write_manifest(out_dir, "train", cfg, [args.data])
    print(result.report.to_text())
    print(f"model written to {out_dir / 'model.json'}")
    return 0


def cmd_retrain(args, cfg) -> int:
    base = _load_training_corpus(args.data, cfg)
    new = _load_training_corpus(args.new, cfg)
    settings = cfgmod.settings_from_config(cfg)
    result = pl.retrain_pipeline(base, new, settings, seed=cfg["seed"])
    out_dir = Path(args.out)
    _write_train_outputs(out_dir, result)
    _write_manifest(out_dir, "retrain", cfg, [args.data, args.new])
    print(result.report.to_text())
    print(f"re-trained model written to {out_dir / 'model.json'}")
    return 0


def cmd_detect(args, cfg) -> int:
    model = mdl.SdaModel.load(args.model)
    rec = read_edf(args.edf)
    if args.bad:
        rec.bad_electrode = load_bad_electrodes(args.bad, rec.duration, rec.labels)
    montage = cfgmod.montage_from_config(cfg)
    det = pl.detect(model, rec, montage=montage)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_mask(out_dir / f"{rec.id}.mask.csv", det.mask)
    write_events(out_dir / f"{rec.id}.events.csv", det.events)
    _write_trace(out_dir / f"{rec.id}.trace.csv", det.trace)
    _write_manifest(out_dir, "detect", cfg, [args.model, args.edf])
    print(
        f"{rec.id}: {len(det.events)} detections, "
        f"{det.mask.seconds()} seizure seconds"
    )
    return 0


def _load_pred_dir(pred_dir: Path) -> dict[str, tuple[AnnotationMask, np.ndarray | None]]:
    preds = {}
    for mask_path in sorted(pred_dir.glob("*.mask.csv")):
        rid = mask_path.name[: -len(".mask.csv")]
        mask = read_mask(mask_path, rater="sda")
        trace_path = pred_dir / f"{rid}.trace.csv"
        trace = _read_trace(trace_path) if trace_path.exists() else None
        preds[rid] = (mask, trace)
    if not preds:
        raise ValidationError(f"no *.mask.csv predictions in {pred_dir}")
    return preds


def _load_truth_dir(
    truth_dir: Path, durations: dict[str, float]
) -> dict[str, dict[str, AnnotationMask]]:
    out = {}
    for rid, duration in durations.items():
        raters = {}
        for annot in sorted(truth_dir.glob(f"{rid}.*.events.csv")):
            rater = annot.name[len(rid) + 1 : -len(".events.csv")]
            if rater == "artifacts":
                continue
            raters[rater] = load_annotations(annot, duration, rater=rater)
        if raters:
            out[rid] = raters
    return out


def _truth_of(raters: dict[str, AnnotationMask]):
    from .signal_io import consensus

    if "truth" in raters:
        return raters["truth"]
    if len(raters) >= 2:
        return consensus(list(raters.values()))
    return next(iter(raters.values()))


def cmd_evaluate(args, cfg) -> int:
    pred_dir = Path(args.pred)
    truth_dir = Path(args.truth)
    preds = _load_pred_dir(pred_dir)
    durations = {rid: float(m.duration) for rid, (m, _) in preds.items()}
    truths = _load_truth_dir(truth_dir, durations)
    orphans = sorted(set(preds) ^ set(truths))
    if orphans:
        raise ValidationError(
            f"prediction/truth neonate ids do not match; orphans: {orphans}"
        )

    items = []
    for rid in sorted(preds):
        mask, trace = preds[rid]
        items.append(
            ev.NeonateEval(id=rid, pred=mask, truth=_truth_of(truths[rid]), trace=trace)
        )
    iters = cfg["evaluate"]["bootstrap_iters"]
    report = ev.evaluate_corpus(items, iters=iters, seed=cfg["seed"])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json())
    (out_dir / "report.txt").write_text(report.to_text())

    rater_names = sorted(
        set.intersection(*(set(r) for r in truths.values())) - {"truth"}
    )
    if len(rater_names) >= 2:
        e1_n, e2_n = rater_names[0], rater_names[1]
        sda = {rid: preds[rid][0] for rid in preds}
        e1 = {rid: truths[rid][e1_n] for rid in preds}
        e2 = {rid: truths[rid][e2_n] for rid in preds}
        r1, r2 = ev.noninferiority_delta_kappa(
            sda, e1, e2, iters=iters, seed=cfg["seed"]
        )
        payload = {
            name: {
                "point": res.point,
                "median": res.median,
                "lo": res.lo,
                "hi": res.hi,
                "verdict": "non-inferior" if res.non_inferior else "inferior",
            }
            for name, res in ((e1_n, r1), (e2_n, r2))
        }
        (out_dir / "noninferiority.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True)
        )
        for name, entry in sorted(payload.items()):
            print(
                f"delta-kappa vs {name}: {entry['median']:.3f} "
                f"({entry['lo']:.3f}-{entry['hi']:.3f}) -> {entry['verdict']}"
            )

    if args.baseline:
        baseline = ev.MetricsReport.from_dict(
            json.loads(Path(args.baseline).read_text())
        )
        comparison = ev.compare_reports(report, baseline)
        (out_dir / "generalizability.json").write_text(
            json.dumps(comparison, indent=2, sort_keys=True)
        )
        if "generalizes" in comparison:
            word = "generalizes" if comparison["generalizes"] else "does NOT generalize"
            print(f"AUC comparison vs baseline: p={comparison['tests']['auc']['p_value']:.4f} ({word})")

    _write_manifest(out_dir, "evaluate", cfg, [args.pred, args.truth])
    print(report.to_text())
    return 0


def _load_masks_any(path: Path, durations: dict[str, float] | None = None) -> dict[str, AnnotationMask]:
    """Masks from a directory of either *.mask.csv or *.<rater>.events.csv."""
    masks = {}
    for mask_path in sorted(path.glob("*.mask.csv")):
        rid = mask_path.name[: -len(".mask.csv")]
        masks[rid] = read_mask(mask_path, rater="sda")
    if masks:
        return masks
    if durations is None:
        raise ValidationError(
            f"{path} has no *.mask.csv and durations are unknown for events files"
        )
    truths = _load_truth_dir(path, durations)
    return {rid: _truth_of(raters) for rid, raters in truths.items()}


def cmd_burden(args, cfg) -> int:
    pred_dir = Path(args.pred)
    preds = _load_masks_any(pred_dir)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    classifications = []
    burdens = {}
    pois = {}
    for rid in sorted(preds):
        mask = preds[rid]
        b = clinical.burden(mask)
        burdens[rid] = b
        with open(out_dir / f"{rid}.burden.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["hour", "seconds", "minutes"])
            for h, sec in enumerate(b.hourly_seconds):
                writer.writerow([h, int(sec), repr(sec / 60.0)])
        windows = clinical.detect_poi(mask)
        pois[rid] = windows
        with open(out_dir / f"{rid}.poi.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["window", "start_s", "is_poi"])
            for w in windows:
                writer.writerow([w.index, w.start_s, int(w.is_poi)])
        total_cls, hourly_cls = clinical.classify_burden(b)
        classifications.append(
            {
                "id": rid,
                "total_min": b.total_min,
                "max_hourly_min": b.max_hourly_min,
                "total_class": total_cls,
                "hourly_class": hourly_cls,
            }
        )
    with open(out_dir / "classification.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "total_min", "max_hourly_min", "total_class", "hourly_class"])
        for row in classifications:
            writer.writerow(
                [row["id"], repr(row["total_min"]), repr(row["max_hourly_min"]),
                 row["total_class"], row["hourly_class"]]
            )

    if args.ref:
        durations = {rid: float(m.duration) for rid, m in preds.items()}
        refs = _load_masks_any(Path(args.ref), durations)
        common = sorted(set(preds) & set(refs))
        if not common:
            raise ValidationError("no common neonates between pred and ref masks")
        ref_burdens = {rid: clinical.burden(refs[rid]) for rid in common}
        r, lo, hi = clinical.burden_correlation(
            [burdens[rid] for rid in common],
            [ref_burdens[rid] for rid in common],
            iters=cfg["evaluate"]["bootstrap_iters"],
            seed=cfg["seed"],
        )
        poi_counts = None
        for rid in common:
            c = clinical.poi_agreement(pois[rid], clinical.detect_poi(refs[rid]))
            poi_counts = c if poi_counts is None else poi_counts + c
        total_counts = _class_counts(
            classifications, {rid: clinical.classify_burden(ref_burdens[rid]) for rid in common}, 0
        )
        hourly_counts = _class_counts(
            classifications, {rid: clinical.classify_burden(ref_burdens[rid]) for rid in common}, 1
        )
        payload = {
            "burden_correlation": {"r": r, "lo": lo, "hi": hi},
            "poi_agreement": _counts_dict(poi_counts),
            "total_burden_agreement": _counts_dict(total_counts),
            "max_hourly_agreement": _counts_dict(hourly_counts),
        }
        (out_dir / "agreement.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True)
        )
        print(f"hourly burden correlation r={r:.3f} ({lo:.3f}-{hi:.3f})")

    _write_manifest(
        out_dir, "burden", cfg, [args.pred] + ([args.ref] if args.ref else [])
    )
    print(f"burden outputs written to {out_dir}")
    return 0


def _class_counts(classifications, ref_classes, which: int) -> ev.ConfusionCounts:
    tp = tn = fp = fn = 0
    for row in classifications:
        rid = row["id"]
        if rid not in ref_classes:
            continue
        pred_high = (row["total_class"] if which == 0 else row["hourly_class"]) == "high"
        truth_high = ref_classes[rid][which] == "high"
        if pred_high and truth_high:
            tp += 1
        elif pred_high:
            fp += 1
        elif truth_high:
            fn += 1
        else:
            tn += 1
    return ev.ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn)


def _counts_dict(c: ev.ConfusionCounts) -> dict:
    return {
        "tp": c.tp,
        "tn": c.tn,
        "fp": c.fp,
        "fn": c.fn,
        "sensitivity": c.sensitivity,
        "specificity": c.specificity,
        "accuracy": c.accuracy,
    }


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neosda",
        description="Neonatal EEG seizure detection toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY.PATH=VALUE",
            help="override a config key (repeatable)",
        )
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True, help="output corpus directory")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train and calibrate a model")
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("retrain", help="re-train with interleaved augmentation")
    p.add_argument("--data", required=True, help="base corpus directory")
    p.add_argument("--new", required=True, help="augmentation corpus directory")
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_retrain)

    p = sub.add_parser("detect", help="annotate one EDF recording")
    p.add_argument("--model", required=True, help="model.json from train")
    p.add_argument("--edf", required=True, help="EDF recording")
    p.add_argument("--bad", help="bad-electrode CSV (second,channel_label)")
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="score predictions against annotations")
    p.add_argument("--pred", required=True, help="directory of detect outputs")
    p.add_argument("--truth", required=True, help="directory of annotation CSVs")
    p.add_argument("--baseline", help="baseline report.json for generalizability")
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("burden", help="clinical burden analytics over masks")
    p.add_argument("--pred", required=True, help="directory of mask CSVs")
    p.add_argument("--ref", help="reference mask/annotation directory")
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_burden)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = cfgmod.load_config(args.config, overrides)
        return args.func(args, cfg)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 1
        logger.debug("unhandled failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
