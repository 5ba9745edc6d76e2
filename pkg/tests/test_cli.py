import json

import numpy as np
import pytest

from neosda import config as cfgmod
from neosda.cli import main
from neosda.errors import ConfigError

FAST_OVERRIDES = [
    "--set", "train.c_grid=[1.0, 10.0]",
    "--set", "train.gamma_grid=[0.004545454545454545, 0.045454545454545456]",
    "--set", "train.inner_folds=2",
    "--set", "train.outer_folds=3",
    "--set", "train.max_train_rows=1500",
    "--set", "outlier.k_grid=[3]",
    "--set", "outlier.dist_quantiles=[99.5]",
    "--set", "outlier.amp_quantiles=[99.5]",
    "--set", "calibration.ma_grid=[3]",
    "--set", "calibration.threshold_grid=[-0.25, 0.0, 0.25]",
    "--set", "calibration.collar_grid=[8.0]",
    "--set", "evaluate.bootstrap_iters=50",
]

SYNTH_ARGS = [
    "--set", "synth.n_neonates=3",
    "--set", "synth.duration_s=1200",
    "--set", "synth.seizure_rate_per_h=9.0",
]


@pytest.fixture(scope="module")
def cli_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_corpus")
    assert main(["synth", "--out", str(out), *SYNTH_ARGS]) == 0
    return out


@pytest.fixture(scope="module")
def cli_model(tmp_path_factory, cli_corpus):
    out = tmp_path_factory.mktemp("cli_model")
    code = main(["train", "--data", str(cli_corpus), "--out", str(out), *FAST_OVERRIDES])
    assert code == 0
    return out


class TestConfig:
    def test_defaults_validate(self):
        cfg = cfgmod.load_config()
        assert cfg["seed"] == 7

    def test_file_and_overrides(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("seed: 42\ntrain:\n  inner_folds: 4\n")
        cfg = cfgmod.load_config(p, ["train.outer_folds=5"])
        assert cfg["seed"] == 42
        assert cfg["train"]["inner_folds"] == 4
        assert cfg["train"]["outer_folds"] == 5

    def test_unknown_key_rejected_with_path(self):
        with pytest.raises(ConfigError, match="no_such_key"):
            cfgmod.load_config(None, ["no_such_key=1"])

    def test_bad_value_names_key(self):
        with pytest.raises(ConfigError, match="train.inner_folds"):
            cfgmod.load_config(None, ["train.inner_folds=1"])

    def test_bad_yaml_file(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("seed: [unclosed\n")
        with pytest.raises(ConfigError, match="YAML"):
            cfgmod.load_config(p)


class TestSynthCommand:
    def test_outputs_exist(self, cli_corpus):
        assert sorted(p.name for p in cli_corpus.glob("*.edf")) == [
            "synth-000.edf", "synth-001.edf", "synth-002.edf",
        ]
        assert (cli_corpus / "synth-000.truth.events.csv").exists()
        assert (cli_corpus / "manifest.json").exists()

    def test_deterministic_rerun(self, cli_corpus, tmp_path):
        out2 = tmp_path / "again"
        assert main(["synth", "--out", str(out2), *SYNTH_ARGS]) == 0
        for f in cli_corpus.iterdir():
            if f.is_file():
                assert (out2 / f.name).read_bytes() == f.read_bytes(), f.name


class TestTrainCommand:
    def test_outputs(self, cli_model):
        for name in ("model.json", "cv_report.json", "cv_report.txt",
                     "hyper_search.json", "calibration.json", "manifest.json"):
            assert (cli_model / name).exists(), name
        assert list((cli_model / "folds").glob("fold-*.json"))
        manifest = json.loads((cli_model / "manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["seed"] == 7
        assert manifest["inputs"]

    def test_seizure_free_corpus_exits_2(self, tmp_path):
        corpus = tmp_path / "empty"
        assert main([
            "synth", "--out", str(corpus),
            "--set", "synth.n_neonates=2",
            "--set", "synth.duration_s=300",
            "--set", "synth.seizure_rate_per_h=0.0",
        ]) == 0
        code = main(["train", "--data", str(corpus), "--out", str(tmp_path / "m"), *FAST_OVERRIDES])
        assert code == 2

    def test_missing_dir_exits_2(self, tmp_path):
        code = main(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "m")])
        assert code == 2

    def test_corrupt_model_exits_1(self, cli_corpus, tmp_path):
        broken = tmp_path / "broken.json"
        broken.write_text("{not json")
        code = main([
            "detect", "--model", str(broken),
            "--edf", str(next(iter(sorted(cli_corpus.glob("*.edf"))))),
            "--out", str(tmp_path / "d"),
        ])
        assert code == 1


@pytest.fixture(scope="module")
def detections(tmp_path_factory, cli_corpus, cli_model):
    out = tmp_path_factory.mktemp("detections")
    for edf in sorted(cli_corpus.glob("*.edf")):
        code = main([
            "detect", "--model", str(cli_model / "model.json"),
            "--edf", str(edf), "--out", str(out),
        ])
        assert code == 0
    return out


class TestDetectEvaluateBurden:
    def test_detect_outputs(self, detections):
        assert (detections / "synth-000.mask.csv").exists()
        assert (detections / "synth-000.events.csv").exists()
        assert (detections / "synth-000.trace.csv").exists()

    def test_detect_version_mismatch_exits_2(self, cli_model, cli_corpus, tmp_path):
        doctored = tmp_path / "doctored.json"
        model = json.loads((cli_model / "model.json").read_text())
        model["feature_version"] = "other"
        doctored.write_text(json.dumps(model))
        code = main([
            "detect", "--model", str(doctored),
            "--edf", str(next(iter(sorted(cli_corpus.glob("*.edf"))))),
            "--out", str(tmp_path / "d"),
        ])
        assert code == 2

    def test_evaluate_outputs(self, detections, cli_corpus, tmp_path):
        out = tmp_path / "eval"
        code = main([
            "evaluate", "--pred", str(detections), "--truth", str(cli_corpus),
            "--out", str(out), "--set", "evaluate.bootstrap_iters=50",
        ])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["n_neonates"] == 3
        assert "kappa" in report["concatenated"]
        # two synthetic experts trigger the non-inferiority output
        noninf = json.loads((out / "noninferiority.json").read_text())
        assert set(noninf) == {"e1", "e2"}
        for entry in noninf.values():
            assert entry["verdict"] in ("non-inferior", "inferior")

    def test_evaluate_generalizability(self, detections, cli_corpus, tmp_path):
        out1 = tmp_path / "eval1"
        assert main([
            "evaluate", "--pred", str(detections), "--truth", str(cli_corpus),
            "--out", str(out1), "--set", "evaluate.bootstrap_iters=50",
        ]) == 0
        out2 = tmp_path / "eval2"
        code = main([
            "evaluate", "--pred", str(detections), "--truth", str(cli_corpus),
            "--out", str(out2), "--baseline", str(out1 / "report.json"),
            "--set", "evaluate.bootstrap_iters=50",
        ])
        assert code == 0
        comparison = json.loads((out2 / "generalizability.json").read_text())
        assert comparison["paired"] is True

    def test_evaluate_orphans_exit_2(self, detections, tmp_path):
        empty_truth = tmp_path / "no_truth"
        empty_truth.mkdir()
        code = main([
            "evaluate", "--pred", str(detections), "--truth", str(empty_truth),
            "--out", str(tmp_path / "e"),
        ])
        assert code == 2

    def test_burden_outputs(self, detections, cli_corpus, tmp_path):
        out = tmp_path / "burden"
        code = main([
            "burden", "--pred", str(detections), "--ref", str(cli_corpus),
            "--out", str(out), "--set", "evaluate.bootstrap_iters=50",
        ])
        assert code == 0
        assert (out / "synth-000.burden.csv").exists()
        assert (out / "synth-000.poi.csv").exists()
        assert (out / "classification.csv").exists()
        agreement = json.loads((out / "agreement.json").read_text())
        assert {"burden_correlation", "poi_agreement", "total_burden_agreement",
                "max_hourly_agreement"} <= set(agreement)

    def test_detect_rerun_byte_identical(self, cli_model, cli_corpus, tmp_path):
        edf = str(next(iter(sorted(cli_corpus.glob("*.edf")))))
        out1, out2 = tmp_path / "d1", tmp_path / "d2"
        for out in (out1, out2):
            assert main([
                "detect", "--model", str(cli_model / "model.json"),
                "--edf", edf, "--out", str(out),
            ]) == 0
        for f in out1.iterdir():
            assert (out2 / f.name).read_bytes() == f.read_bytes(), f.name
