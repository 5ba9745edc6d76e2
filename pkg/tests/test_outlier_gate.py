import numpy as np
import pytest

from neosda import features as feats
from neosda import outlier_gate as og
from neosda import postprocess as pp
from neosda.errors import DataError
from neosda.preprocess import EpochGrid
from neosda.signal_io import AnnotationMask


def make_params(rng, n_ref=50, k=1, d_max=1.0, amp_max=100.0):
    ref = rng.normal(0, 1, (n_ref, feats.N_FEATURES))
    return og.OutlierParams(k=k, d_max=d_max, amp_max=amp_max, reference_set=ref)


class TestKnnDistance:
    def test_self_distance_zero(self, rng):
        ref = rng.normal(0, 1, (20, 5))
        assert og.knn_distance(ref[3], ref, 1) == 0.0

    def test_hand_euclidean(self):
        ref = np.array([[0.0, 0.0], [3.0, 4.0]])
        assert og.knn_distance(np.array([0.0, 0.0]), ref, 2) == pytest.approx(5.0)

    def test_translation_invariant(self, rng):
        ref = rng.normal(0, 1, (30, 4))
        x = rng.normal(0, 1, 4)
        shift = rng.normal(0, 10, 4)
        d1 = og.knn_distance(x, ref, 3)
        d2 = og.knn_distance(x + shift, ref + shift, 3)
        assert d1 == pytest.approx(d2, rel=1e-9)

    def test_k_exceeds_reference_rejected(self, rng):
        ref = rng.normal(0, 1, (5, 2))
        with pytest.raises(DataError, match="exceeds"):
            og.knn_distance(np.zeros(2), ref, 6)

    def test_multi_k_matches_single(self, rng):
        ref = rng.normal(0, 1, (40, 6))
        q = rng.normal(0, 1, (15, 6))
        multi = og.kth_neighbor_distances_multi(q, ref, [1, 3, 7])
        for k in (1, 3, 7):
            single = og.kth_neighbor_distances(q, ref, k)
            np.testing.assert_array_equal(multi[k], single)

    def test_multi_k_brute_force_oracle(self, rng):
        ref = rng.normal(0, 1, (25, 3))
        q = rng.normal(0, 1, (10, 3))
        dists = og.kth_neighbor_distances_multi(q, ref, [2, 5])
        full = np.sqrt(((q[:, None, :] - ref[None, :, :]) ** 2).sum(-1))
        full.sort(axis=1)
        np.testing.assert_allclose(dists[2], full[:, 1], rtol=1e-9)
        np.testing.assert_allclose(dists[5], full[:, 4], rtol=1e-9)

    def test_exclude_self(self, rng):
        ref = rng.normal(0, 1, (12, 4))
        within = og.kth_neighbor_distances(ref, ref, 1, exclude_self=True)
        assert np.all(within > 0)


class TestIsOutlier:
    def test_training_point_is_inlier(self, rng):
        params = make_params(rng, k=1, d_max=0.5, amp_max=100.0)
        fv = np.concatenate([params.reference_set[7], [50.0]])
        assert not og.is_outlier(fv, params)

    def test_amplitude_overrides_distance(self, rng):
        params = make_params(rng, k=1, d_max=10.0, amp_max=100.0)
        fv = np.concatenate([params.reference_set[0], [200.0]])
        assert og.is_outlier(fv, params)

    def test_boundary_is_strict(self, rng):
        ref = np.zeros((3, feats.N_FEATURES))
        params = og.OutlierParams(k=1, d_max=2.0, amp_max=100.0, reference_set=ref)
        fv = np.zeros(len(feats.COLUMNS))
        fv[0] = 2.0  # distance exactly d_max
        fv[-1] = 100.0  # amplitude exactly amp_max
        assert not og.is_outlier(fv, params)
        fv[0] = 2.0000001
        assert og.is_outlier(fv, params)

    def test_flags_match_scalar_gate(self, rng):
        params = make_params(rng, k=3, d_max=1.5, amp_max=80.0)
        values = np.concatenate(
            [rng.normal(0, 2, (30, feats.N_FEATURES)), rng.uniform(0, 160, (30, 1))],
            axis=1,
        )
        flags = og.outlier_flags(values, params)
        scalar = np.array([og.is_outlier(v, params) for v in values])
        np.testing.assert_array_equal(flags, scalar)


def make_cv_record(rng, nid, n_epochs=50, seizure=(10, 20)):
    grid = EpochGrid(n_epochs=n_epochs, hop_s=16.0)
    duration = n_epochs * 16
    truth = np.zeros(duration, dtype=bool)
    stats = rng.normal(-1.0, 0.3, (1, n_epochs))
    for lo, hi in [seizure]:
        stats[0, lo:hi] = rng.normal(1.0, 0.3, hi - lo)
        truth[lo * 16 : hi * 16] = True
    kdist = {3: rng.uniform(0.1, 0.9, (1, n_epochs))}
    return og.CvRecord(
        neonate_id=nid,
        stats=stats,
        max_amp=rng.uniform(10, 50, (1, n_epochs)),
        bad=np.zeros((1, n_epochs), dtype=bool),
        kth_dists=kdist,
        dist_thresholds={(3, 99.5): 1.0},
        amp_thresholds={99.5: 60.0},
        truth=AnnotationMask("truth", truth),
        grid=grid,
    )


class TestCalibrate:
    def test_single_candidate_returned(self, rng):
        records = [make_cv_record(rng, f"n{i}") for i in range(3)]
        result = og.calibrate(
            records,
            k_grid=(3,),
            dist_quantiles=(99.5,),
            amp_quantiles=(99.5,),
            ma_grid=(3,),
            threshold_grid=(0.0,),
            collar_grid=(8.0,),
        )
        assert result.gate == og.GateChoice(3, 99.5, 99.5)
        assert result.postproc.ma_len == 3
        assert len(result.table) == 1

    def test_picks_kappa_maximizer(self, rng):
        records = [make_cv_record(rng, f"n{i}") for i in range(3)]
        result = og.calibrate(
            records,
            k_grid=(3,),
            dist_quantiles=(99.5,),
            amp_quantiles=(99.5,),
            ma_grid=(1, 3),
            threshold_grid=(-5.0, 0.0),
            collar_grid=(0.0,),
        )
        # threshold -5 labels everything seizure; kappa prefers 0
        assert result.postproc.threshold == 0.0
        best = max(result.table, key=lambda e: e["kappa"])
        assert result.kappa == best["kappa"]

    def test_artifact_suppression_selects_usable_amp_threshold(self, rng):
        records = []
        for i in range(4):
            rec = make_cv_record(rng, f"n{i}")
            # inject high-amplitude artifacts that fire the detector
            rec.max_amp[0, 30:35] = 1000.0
            rec.stats[0, 30:35] = 2.0
            records.append(rec)
            rec.amp_thresholds = {99.0: 55.0, 99.9: 900.0}
        result = og.calibrate(
            records,
            k_grid=(3,),
            dist_quantiles=(99.5,),
            amp_quantiles=(99.0, 99.9),
            ma_grid=(1,),
            threshold_grid=(0.0,),
            collar_grid=(0.0,),
        )
        chosen = records[0].amp_thresholds[result.gate.amp_quantile]
        assert chosen <= 1000.0
        flags = records[0].max_amp > chosen
        assert flags[0, 30:35].all()

    def test_deterministic(self, rng):
        records = [make_cv_record(rng, f"n{i}") for i in range(3)]
        kwargs = dict(
            k_grid=(3,),
            dist_quantiles=(99.5,),
            amp_quantiles=(99.5,),
            ma_grid=(1, 3),
            threshold_grid=(0.0, 0.5),
            collar_grid=(0.0, 8.0),
        )
        r1 = og.calibrate(records, **kwargs)
        r2 = og.calibrate(records, **kwargs)
        assert r1.gate == r2.gate and r1.postproc == r2.postproc
        assert r1.kappa == r2.kappa

    def test_empty_grid_rejected(self, rng):
        records = [make_cv_record(rng, "n0")]
        with pytest.raises(DataError, match="empty"):
            og.calibrate(records, k_grid=())


class TestGateSemantics:
    def test_gated_seizure_set_is_subset(self, rng):
        # the gate can only remove 'seizure' decisions, never add them
        params = make_params(rng, n_ref=100, k=3, d_max=1.2, amp_max=90.0)
        probes = np.concatenate(
            [rng.normal(0, 2, (500, feats.N_FEATURES)), rng.uniform(0, 180, (500, 1))],
            axis=1,
        )
        margins = rng.normal(0, 1, 500)
        without_gate = margins > 0
        flags = og.outlier_flags(probes, params)
        with_gate = without_gate & ~flags
        assert np.all(with_gate <= without_gate)

    def test_outlier_epoch_forces_no_seizure(self, rng):
        grid = EpochGrid(n_epochs=4, hop_s=16.0)
        stats = np.full((1, 4), 5.0)
        outliers = np.array([[True, True, True, True]])
        mask = pp.postprocess(
            stats, outliers, None, pp.PostprocParams(ma_len=1), grid, 64.0
        )
        assert not mask.mask.any()


class TestFitParams:
    def test_quantile_thresholds(self, rng):
        values = np.concatenate(
            [rng.normal(0, 1, (500, feats.N_FEATURES)), rng.uniform(5, 50, (500, 1))],
            axis=1,
        )
        params = og.fit_params(values, og.GateChoice(3, 99.0, 99.5), seed=0)
        assert params.k == 3
        within = og.kth_neighbor_distances(
            values[:, : feats.N_FEATURES], values[:, : feats.N_FEATURES], 3,
            exclude_self=True,
        )
        assert params.d_max == pytest.approx(np.percentile(within, 99.0))
        assert params.amp_max == pytest.approx(np.percentile(values[:, -1], 99.5))

    def test_reference_subsampling_seeded(self, rng):
        values = np.concatenate(
            [rng.normal(0, 1, (300, feats.N_FEATURES)), rng.uniform(5, 50, (300, 1))],
            axis=1,
        )
        p1 = og.fit_params(values, og.GateChoice(3, 99.0, 99.0), max_reference=100, seed=4)
        p2 = og.fit_params(values, og.GateChoice(3, 99.0, 99.0), max_reference=100, seed=4)
        assert p1.reference_set.shape == (100, feats.N_FEATURES)
        np.testing.assert_array_equal(p1.reference_set, p2.reference_set)
