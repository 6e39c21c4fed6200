import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from synchrodaq.metrics import (
    cosine_similarity,
    detection_metrics,
    estimate_lag,
    frame_iou,
    grasper_agreement,
    nrmse,
    pedal_usage,
    series_to_intervals,
    temporal_iou,
    unwrap_degrees,
)


class TestCosineSimilarity:
    def test_identical_is_one(self):
        a = np.array([1.0, 5.0, 2.0, 8.0])
        assert cosine_similarity(a, a) == pytest.approx(1.0)

    def test_reversed_ramp_is_minus_one(self):
        assert cosine_similarity([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_orthogonal_centered_is_zero(self):
        a = np.array([1.0, -1.0, 1.0, -1.0])
        b = np.array([1.0, 1.0, -1.0, -1.0])
        assert cosine_similarity(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_constant_series_rejected(self):
        with pytest.raises(ValueError):
            cosine_similarity([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])

    @settings(max_examples=50)
    @given(seed=st.integers(0, 2**32 - 1), c=st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3))
    def test_scale_invariance_after_centering(self, seed, c):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=20)
        b = rng.normal(size=20)
        expect = np.sign(c) * cosine_similarity(a, b)
        assert cosine_similarity(a, c * b) == pytest.approx(expect, abs=1e-9)


class TestNrmse:
    def test_equal_is_zero(self):
        gt = np.array([0.0, 1.0, 3.0])
        assert nrmse(gt, gt) == 0.0

    def test_offset_by_tenth_of_range_is_ten_percent(self):
        gt = np.array([0.0, 2.0, 10.0, 4.0])
        pred = gt + 0.1 * (gt.max() - gt.min())
        assert nrmse(pred, gt) == pytest.approx(10.0)

    def test_constant_gt_rejected(self):
        with pytest.raises(ValueError):
            nrmse(np.array([1.0, 2.0]), np.array([3.0, 3.0]))

    def test_common_offset_leaves_value(self):
        rng = np.random.default_rng(0)
        gt = rng.normal(size=30)
        pred = gt + rng.normal(0, 0.2, 30)
        assert nrmse(pred + 7.5, gt + 7.5) == pytest.approx(nrmse(pred, gt))


def brute_counts(pred, gt):
    tp = fp = fn = tn = 0
    for p, g in zip(pred, gt):
        if p and g:
            tp += 1
        elif p and not g:
            fp += 1
        elif not p and g:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


class TestDetectionMetrics:
    def test_perfect_prediction(self):
        gt = np.array([0, 1, 1, 0, 1])
        assert detection_metrics(gt, gt) == (1.0, 1.0, 1.0)

    def test_all_positive_prediction(self):
        gt = np.array([1, 1, 0, 0])
        p, r, f1 = detection_metrics(np.ones(4, dtype=int), gt)
        assert (p, r) == (0.5, 1.0)
        assert f1 == pytest.approx(2 / 3)

    def test_all_negative_prediction(self):
        gt = np.array([1, 0, 1, 0])
        p, r, f1 = detection_metrics(np.zeros(4, dtype=int), gt)
        assert (p, r, f1) == (0.0, 0.0, 0.0)

    @settings(max_examples=100)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 200))
    def test_matches_bruteforce_confusion_matrix(self, seed, n):
        rng = np.random.default_rng(seed)
        pred = (rng.random(n) < 0.5).astype(int)
        gt = (rng.random(n) < 0.3).astype(int)
        tp, fp, fn, _ = brute_counts(pred, gt)
        p, r, f1 = detection_metrics(pred, gt)
        assert p == pytest.approx(tp / (tp + fp) if tp + fp else 0.0)
        assert r == pytest.approx(tp / (tp + fn) if tp + fn else 0.0)
        expect_f1 = 2 * p * r / (p + r) if p + r else 0.0
        assert f1 == pytest.approx(expect_f1)


class TestTemporalIou:
    def test_identical_sets(self):
        ivs = [(0.0, 2.0), (5.0, 6.0)]
        assert temporal_iou(ivs, ivs) == pytest.approx(1.0)

    def test_disjoint_sets(self):
        assert temporal_iou([(0, 1)], [(2, 3)]) == 0.0

    def test_partial_overlap_hand_value(self):
        # [0,2] vs [1,3]: intersection 1, union 3
        assert temporal_iou([(0, 2)], [(1, 3)]) == pytest.approx(1 / 3)

    def test_both_empty_is_one(self):
        assert temporal_iou([], []) == 1.0

    def test_malformed_interval_rejected(self):
        with pytest.raises(ValueError):
            temporal_iou([(2, 2)], [(0, 1)])

    @settings(max_examples=50)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        mk = lambda: [(s, s + rng.uniform(0.1, 2)) for s in rng.uniform(0, 20, rng.integers(0, 6))]
        a, b = mk(), mk()
        assert temporal_iou(a, b) == pytest.approx(temporal_iou(b, a))

    @settings(max_examples=50)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_frame_and_interval_forms_agree(self, seed):
        rng = np.random.default_rng(seed)
        n = 400
        pred = np.zeros(n, dtype=np.int8)
        gt = np.zeros(n, dtype=np.int8)
        for arr in (pred, gt):
            for _ in range(rng.integers(1, 5)):
                s = rng.integers(0, n - 20)
                arr[s : s + rng.integers(5, 20)] = 1
        f = frame_iou(pred == 1, gt == 1)
        i = temporal_iou(series_to_intervals(pred), series_to_intervals(gt))
        assert f == pytest.approx(i, abs=1e-12)  # unit-spaced frames: forms coincide


class TestEstimateLag:
    def make_wave(self, n=300, seed=0):
        rng = np.random.default_rng(seed)
        gt = np.zeros(n, dtype=np.int8)
        for _ in range(5):
            s = rng.integers(0, n - 40)
            gt[s : s + rng.integers(10, 35)] = 1
        return gt

    def test_zero_for_identical(self):
        gt = self.make_wave()
        assert estimate_lag(gt, gt, 30.0, 15) == 0.0

    def test_five_frame_delay_at_30hz(self):
        gt = self.make_wave(seed=1)
        pred = np.concatenate([np.zeros(5, dtype=np.int8), gt[:-5]])
        assert estimate_lag(pred, gt, 30.0, 15) == pytest.approx(1000.0 * 5 / 30.0)

    def test_four_frame_delay_at_30hz(self):
        gt = self.make_wave(seed=2)
        pred = np.concatenate([np.zeros(4, dtype=np.int8), gt[:-4]])
        assert estimate_lag(pred, gt, 30.0, 15) == pytest.approx(1000.0 * 4 / 30.0)

    def test_negative_shift_detected(self):
        gt = self.make_wave(seed=3)
        pred = np.concatenate([gt[3:], np.zeros(3, dtype=np.int8)])
        assert estimate_lag(pred, gt, 30.0, 15) == pytest.approx(-100.0)

    def test_exact_for_all_shifts(self):
        gt = self.make_wave(seed=4)
        for k in range(-10, 11):
            pred = np.roll(gt, k)
            assert estimate_lag(pred, gt, 30.0, 12) == pytest.approx(1000.0 * k / 30.0)

    def test_tie_breaks_toward_positive(self):
        # symmetric single pulse: shifts +1 and -1 agree equally
        gt = np.array([0, 0, 1, 0, 0, 0], dtype=np.int8)
        pred = np.array([0, 1, 0, 1, 0, 0], dtype=np.int8)
        lag = estimate_lag(pred, gt, 10.0, 2)
        assert lag >= 0.0

    def test_no_positives_rejected(self):
        with pytest.raises(ValueError):
            estimate_lag(np.zeros(10, dtype=int), np.zeros(10, dtype=int), 30.0, 3)

    def test_max_shift_bound(self):
        with pytest.raises(ValueError):
            estimate_lag(np.ones(10, dtype=int), np.ones(10, dtype=int), 30.0, 5)


class TestGrasperAgreement:
    def test_perfect(self):
        gt = np.array([0, 1, 1, 0])
        assert grasper_agreement(gt, gt) == (1.0, 1.0, 1.0)

    def test_known_confusion_counts(self):
        pred = np.array([1, 1, 0, 0, 1, 0], dtype=np.int8)
        gt = np.array([1, 0, 0, 1, 1, 0], dtype=np.int8)
        # tp=2 fp=1 fn=1 tn=2 -> iou 2/4, acc 4/6, prec 2/3
        iou, acc, prec = grasper_agreement(pred, gt)
        assert iou == pytest.approx(0.5)
        assert acc == pytest.approx(4 / 6)
        assert prec == pytest.approx(2 / 3)

    def test_all_open_prediction(self):
        gt = np.array([1, 0, 1, 0])
        iou, acc, prec = grasper_agreement(np.zeros(4, dtype=int), gt)
        assert iou == 0.0
        assert acc == pytest.approx(0.5)  # open fraction
        assert prec == 0.0


class TestPedalUsage:
    def test_single_active_channel_is_hundred_percent(self):
        states = {1: np.array([0, 1, 1]), 2: np.zeros(3, dtype=int)}
        mapping = {1: "camera", 2: "clutch"}
        assert pedal_usage(states, mapping)[1] == pytest.approx(100.0)

    def test_energy_normalization_shares(self):
        # constructed press-frame counts reproduce a 70.79 / 29.21 split
        states = {
            2: np.concatenate([np.ones(2921, dtype=int), np.zeros(100, dtype=int)]),
            4: np.concatenate([np.ones(7079, dtype=int), np.zeros(100, dtype=int)]),
            6: np.ones(500, dtype=int),
        }
        mapping = {2: "energy-secondary", 4: "energy-primary", 6: "camera"}
        usage = pedal_usage(states, mapping, subset=[2, 4])
        assert usage[4] == pytest.approx(70.79)
        assert usage[2] == pytest.approx(29.21)

    def test_unused_channel_is_zero(self):
        states = {1: np.ones(10, dtype=int), 2: np.zeros(10, dtype=int)}
        mapping = {1: "a", 2: "b"}
        assert pedal_usage(states, mapping)[2] == 0.0

    def test_empty_subset_rejected(self):
        with pytest.raises(ValueError):
            pedal_usage({1: np.ones(3, dtype=int)}, {1: "a"}, subset=[])

    def test_shares_sum_to_hundred(self):
        rng = np.random.default_rng(8)
        states = {ch: (rng.random(200) < 0.3).astype(int) for ch in range(1, 6)}
        mapping = {ch: f"p{ch}" for ch in range(1, 6)}
        assert sum(pedal_usage(states, mapping).values()) == pytest.approx(100.0)


def test_unwrap_degrees_removes_seam_jumps():
    series = np.array([170.0, 179.0, -179.0, -170.0])
    out = unwrap_degrees(series)
    assert np.all(np.abs(np.diff(out)) < 20)
