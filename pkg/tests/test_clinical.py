import numpy as np
import pytest

from neosda import clinical
from neosda.errors import DataError, UndefinedMetricError
from neosda.signal_io import AnnotationMask


def mask_with(events, duration):
    m = np.zeros(duration, dtype=bool)
    for on, off in events:
        m[on:off] = True
    return AnnotationMask("x", m)


class TestBurden:
    def test_all_false(self):
        b = clinical.burden(mask_with([], 7200))
        assert b.total_min == 0
        assert np.all(b.hourly_seconds == 0)

    def test_single_event_in_hour_zero(self):
        b = clinical.burden(mask_with([(100, 220)], 7200))
        assert b.hourly_seconds[0] == 120
        assert b.hourly_seconds[1] == 0
        assert b.total_min == pytest.approx(2.0)

    def test_straddling_hour_boundary(self):
        b = clinical.burden(mask_with([(3590, 3610)], 7200))
        # per-second binning oracle
        assert b.hourly_seconds[0] == 10
        assert b.hourly_seconds[1] == 10

    def test_trailing_partial_hour_own_bin(self):
        b = clinical.burden(mask_with([(3700, 3760)], 3900))
        assert len(b.hourly_seconds) == 2
        assert b.hourly_seconds[1] == 60

    def test_sum_equals_mask_true_seconds(self, rng):
        for _ in range(20):
            m = AnnotationMask("x", rng.random(int(rng.integers(60, 9000))) > 0.7)
            b = clinical.burden(m)
            assert b.hourly_seconds.sum() == m.mask.sum()


class TestPoi:
    def test_two_thirty_second_seizures(self):
        m = mask_with([(100, 130), (600, 630)], 7200)
        assert clinical.detect_poi(m)[0].is_poi

    def test_one_hundred_second_seizure_not_poi(self):
        m = mask_with([(100, 200)], 7200)
        assert not clinical.detect_poi(m)[0].is_poi

    def test_one_two_hundred_second_seizure_is_poi(self):
        m = mask_with([(100, 300)], 7200)
        assert clinical.detect_poi(m)[0].is_poi

    def test_straddling_event_counts_in_window_with_30s(self):
        # event covers 40 s before and 25 s after the boundary
        m = mask_with([(7160, 7225), (7300, 7330), (8000, 8030)], 14400)
        windows = clinical.detect_poi(m)
        # window 0: one qualifying event (40 s in-window), accum 40 < 180
        assert not windows[0].is_poi
        # window 1: straddle contributes 25 s (< 30, does not count as an
        # event) but two clean 30 s events do
        assert windows[1].is_poi

    def test_accumulated_seconds_rule_across_small_events(self):
        events = [(i * 100, i * 100 + 25) for i in range(8)]  # 200 s total
        m = mask_with(events, 7200)
        assert clinical.detect_poi(m)[0].is_poi

    def test_monotone_in_added_seizure(self, rng):
        for _ in range(20):
            base = rng.random(7200) > 0.97
            more = base | (rng.random(7200) > 0.97)
            poi_base = clinical.detect_poi(AnnotationMask("a", base))[0].is_poi
            poi_more = clinical.detect_poi(AnnotationMask("b", more))[0].is_poi
            assert poi_more >= poi_base


class TestClassify:
    def test_total_threshold_strict(self):
        b = clinical.BurdenSeries(hourly_seconds=[45 * 60])
        assert clinical.classify_burden(b)[0] == "low"  # exactly 45 min
        b = clinical.BurdenSeries(hourly_seconds=[46 * 60])
        assert clinical.classify_burden(b)[0] == "high"

    def test_hourly_threshold_strict(self):
        b = clinical.BurdenSeries(hourly_seconds=[13 * 60])
        assert clinical.classify_burden(b)[1] == "low"  # exactly 13 min/h
        b = clinical.BurdenSeries(hourly_seconds=[13 * 60 + 1])
        assert clinical.classify_burden(b)[1] == "high"

    def test_zero_burden(self):
        b = clinical.BurdenSeries(hourly_seconds=[0, 0])
        assert clinical.classify_burden(b) == ("low", "low")

    def test_monotone(self, rng):
        hours = rng.integers(0, 3600, 5)
        b1 = clinical.BurdenSeries(hourly_seconds=hours)
        b2 = clinical.BurdenSeries(hourly_seconds=hours + 100)
        order = {"low": 0, "high": 1}
        c1, c2 = clinical.classify_burden(b1), clinical.classify_burden(b2)
        assert order[c2[0]] >= order[c1[0]]
        assert order[c2[1]] >= order[c1[1]]


class TestCorrelation:
    def test_identity_is_one(self):
        a = [clinical.BurdenSeries(hourly_seconds=[0, 60, 120])] * 3
        r, lo, hi = clinical.burden_correlation(a, a, iters=50, seed=0)
        assert r == pytest.approx(1.0)

    def test_scale_invariance(self):
        a = [clinical.BurdenSeries(hourly_seconds=[0, 60, 120])] * 3
        b = [clinical.BurdenSeries(hourly_seconds=[0, 120, 240])] * 3
        r, _, _ = clinical.burden_correlation(a, b, iters=50, seed=0)
        assert r == pytest.approx(1.0)

    def test_hand_pearson(self):
        assert clinical.pearson_r(np.array([0.0, 1, 2]), np.array([0.0, 2, 3])) == (
            pytest.approx(0.9820, abs=2e-4)
        )

    def test_zero_variance_undefined(self):
        with pytest.raises(UndefinedMetricError):
            clinical.pearson_r(np.array([1.0, 1, 1]), np.array([0.0, 1, 2]))

    def test_mismatched_grids_rejected(self):
        a = [clinical.BurdenSeries(hourly_seconds=[0, 60])]
        b = [clinical.BurdenSeries(hourly_seconds=[0, 60, 120])]
        with pytest.raises(DataError):
            clinical.burden_correlation(a, b)


class TestPoiAgreement:
    def test_published_tables(self):
        # POI table: sens 83%, spec 87%, accuracy 87%
        c = clinical.ConfusionCounts(tp=151, tn=716, fp=103, fn=30)
        assert c.accuracy == pytest.approx((151 + 716) / 1000)
        # total burden table: sens 85%, spec 100%
        c = clinical.ConfusionCounts(tp=11, tn=15, fp=0, fn=2)
        assert c.sensitivity == pytest.approx(11 / 13)
        assert c.specificity == 1.0

    def test_window_agreement(self):
        pred = mask_with([(100, 300)], 14400)
        truth = mask_with([(100, 300), (8000, 8200)], 14400)
        counts = clinical.poi_agreement(
            clinical.detect_poi(pred), clinical.detect_poi(truth)
        )
        assert (counts.tp, counts.fn, counts.fp, counts.tn) == (1, 1, 0, 0)

    def test_identical_windows_accuracy_one(self):
        m = mask_with([(10, 250)], 7200)
        w = clinical.detect_poi(m)
        counts = clinical.poi_agreement(w, w)
        assert counts.accuracy == 1.0

    def test_grid_mismatch_rejected(self):
        a = clinical.detect_poi(mask_with([], 7200))
        b = clinical.detect_poi(mask_with([], 14400))
        with pytest.raises(DataError):
            clinical.poi_agreement(a, b)
