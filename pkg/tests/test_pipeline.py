import numpy as np
import pytest

from neosda import features as feats
from neosda import pipeline as pl
from neosda import synth
from neosda.errors import DataError
from neosda.signal_io import Montage, write_edf, write_events


class TestLoadCorpus:
    def test_consensus_of_two_experts_without_truth(self, tmp_path):
        spec = synth.SynthSpec(n_neonates=1, duration_s=600, seizure_rate_per_h=6.0,
                               seizure_dur_s=(30.0, 90.0), seed=31)
        item = synth.generate(spec, 0)
        write_edf(item.recording, tmp_path / "synth-000.edf")
        from neosda.postprocess import extract_events

        write_events(tmp_path / "synth-000.e1.events.csv", extract_events(item.expert1))
        write_events(tmp_path / "synth-000.e2.events.csv", extract_events(item.expert2))
        data = pl.load_corpus(tmp_path)
        assert len(data) == 1
        assert data[0].truth.rater == "consensus"
        np.testing.assert_array_equal(
            data[0].truth.mask, item.expert1.mask & item.expert2.mask
        )

    def test_truth_rater_preferred(self, tmp_path):
        spec = synth.SynthSpec(n_neonates=1, duration_s=600, seizure_rate_per_h=6.0,
                               seizure_dur_s=(30.0, 90.0), seed=32)
        synth.write_corpus(spec, tmp_path)
        data = pl.load_corpus(tmp_path)
        item = synth.generate(spec, 0)
        np.testing.assert_array_equal(data[0].truth.mask, item.truth.mask)
        assert set(data[0].raters) == {"truth", "e1", "e2"}

    def test_missing_annotations_rejected(self, tmp_path):
        spec = synth.SynthSpec(n_neonates=1, duration_s=300, seed=33)
        item = synth.generate(spec, 0)
        write_edf(item.recording, tmp_path / "synth-000.edf")
        with pytest.raises(DataError, match="annotation"):
            pl.load_corpus(tmp_path)

    def test_empty_dir_rejected(self, tmp_path):
        with pytest.raises(DataError, match="EDF"):
            pl.load_corpus(tmp_path)

    def test_bad_electrode_sidecar_flows_to_epochs(self, tmp_path):
        spec = synth.SynthSpec(n_neonates=1, duration_s=600, seizure_rate_per_h=6.0,
                               seizure_dur_s=(30.0, 90.0), seed=34)
        synth.write_corpus(spec, tmp_path)
        (tmp_path / "synth-000.bad.csv").write_text(
            "second,channel_label\n100,F3\n101,F3\n"
        )
        data = pl.load_corpus(tmp_path)
        # F3 feeds only the F3-P3 derivation (montage channel 0)
        assert data[0].bad[0].any()
        assert not data[0].bad[1].any()
        assert not data[0].bad[2].any()


class TestPrepare:
    def test_shapes_consistent(self):
        spec = synth.SynthSpec(n_neonates=1, duration_s=120, seizure_rate_per_h=0.0, seed=35)
        rec = synth.generate(spec, 0).recording
        fm, grid, bad = pl.prepare_recording(rec, pl.DEFAULT_MONTAGE)
        assert fm.n_channels == 3
        assert fm.n_epochs == grid.n_epochs
        assert bad.shape == (3, grid.n_epochs)

    def test_montage_mismatch_rejected(self):
        spec = synth.SynthSpec(
            n_neonates=1, duration_s=120, channels=("A", "B"), seed=36
        )
        rec = synth.generate(spec, 0).recording
        with pytest.raises(DataError, match="absent"):
            pl.prepare_recording(rec, Montage((("F3", "P3"),)))


class TestTrainPipeline:
    def test_model_complete(self, small_trained):
        model = small_trained.model
        assert model.outlier is not None
        assert model.outlier.reference_set.shape[1] == feats.N_FEATURES
        assert model.support_vectors.shape[0] == model.sv_coef.shape[0]
        assert abs(model.sv_coef.sum()) <= 1e-6 * model.c
        assert model.meta["n_sv"] > 0
        # calibrated parameters came from the searched grids
        assert model.postproc.ma_len in (3,)
        assert small_trained.calibration.kappa > 0.5
        assert len(small_trained.hyper_table) == 4

    def test_report_covers_corpus(self, small_trained, small_corpus):
        report = small_trained.report
        assert report.n_neonates == len(small_corpus)
        assert "kappa" in report.concatenated

    def test_detect_on_training_neonate_consistent(self, small_trained, small_corpus):
        # sanity: the final model finds seizures where the CV stats did
        spec = synth.SynthSpec(n_neonates=4, duration_s=1200, seizure_rate_per_h=9.0, seed=11)
        item = synth.generate(spec, 0)
        det = pl.detect(small_trained.model, item.recording)
        from neosda.evaluation import cohen_kappa

        assert cohen_kappa(det.mask, item.truth) > 0.5

    def test_single_neonate_rejected(self, small_corpus):
        with pytest.raises(DataError, match="two neonates"):
            pl.train_pipeline(small_corpus[:1], pl.TrainSettings(), seed=0)

    def test_all_artifact_recording_yields_no_detections(self, small_trained):
        # every epoch exceeds amp_max, so the gate silences the whole record
        from neosda.signal_io import Recording

        rng = np.random.default_rng(50)
        fs, dur = 256.0, 120
        t = np.arange(int(fs * dur)) / fs
        amp = 20 * small_trained.model.outlier.amp_max
        data = np.vstack(
            [amp * np.sin(2 * np.pi * 2.0 * t + p) for p in rng.uniform(0, 6, 4)]
        ) + rng.normal(0, 20, (4, t.size))
        rec = Recording(id="artifact", labels=["F3", "F4", "P3", "P4"], data=data, fs=fs)
        det = pl.detect(small_trained.model, rec)
        assert det.outliers.all()
        assert det.events == []


class TestAugmentation:
    def test_nonseizure_rows_from_second_half_only(self, small_corpus):
        values, labels = pl.build_augmentation(small_corpus, 50, 50, seed=1)
        assert labels.sum() <= 50
        assert (~labels).sum() <= 50
        # verify the non-seizure rows really come from second-half epochs
        d = small_corpus[0]
        starts = np.array(
            [d.grid.start_second(int(e)) for e in d.fm.epoch_index]
        )
        eligible = d.fm.values[~d.row_labels & ~d.row_bad & (starts >= d.duration_s / 2)]
        pool = {tuple(np.round(r, 9)) for r in eligible}
        all_first_half = {
            tuple(np.round(r, 9))
            for r in d.fm.values[~d.row_labels & (starts < d.duration_s / 2)]
        }
        nonseiz = values[~labels]
        for row in map(tuple, np.round(nonseiz, 9)):
            assert row not in all_first_half

    def test_no_seizure_augmentation_rejected(self, tmp_path):
        spec = synth.SynthSpec(n_neonates=1, duration_s=300, seizure_rate_per_h=0.0, seed=40)
        synth.write_corpus(spec, tmp_path)
        data = pl.load_corpus(tmp_path)
        with pytest.raises(DataError, match="no seizure"):
            pl.build_augmentation(data, 10, 10, seed=0)

    def test_deterministic(self, small_corpus):
        a = pl.build_augmentation(small_corpus, 30, 30, seed=5)
        b = pl.build_augmentation(small_corpus, 30, 30, seed=5)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
