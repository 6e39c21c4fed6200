import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from synchrodaq.grasper import GrasperEstimatorConfig, estimate_grasper_state, moving_average_centered
from synchrodaq.metrics import frame_iou
from synchrodaq.pedal import binarize_pedal, calibrate_pedal_threshold
from synchrodaq.simulate import FsrChannelModel, fsr_voltage


def series_from_distance(dist):
    """Two point tracks straddling the origin at the given separations."""
    n = len(dist)
    a = np.zeros((n, 3))
    b = np.zeros((n, 3))
    a[:, 0] = np.asarray(dist) / 2.0
    b[:, 0] = -np.asarray(dist) / 2.0
    return a, b


class TestGrasper:
    def test_constant_distance_above_threshold_all_open(self):
        a, b = series_from_distance(np.full(100, 6.0))
        state = estimate_grasper_state(a, b, GrasperEstimatorConfig(window=15, threshold_cm=4.0))
        assert not state.any()

    def test_square_wave_iou_against_truth(self):
        truth = np.zeros(600, dtype=np.int8)
        for start in range(60, 600, 180):
            truth[start : start + 90] = 1
        dist = np.where(truth == 1, 2.0, 6.0)
        a, b = series_from_distance(dist)
        state = estimate_grasper_state(a, b, GrasperEstimatorConfig(window=15, threshold_cm=4.0))
        assert frame_iou(state == 1, truth == 1) >= 0.9

    def test_single_sample_spike_suppressed(self):
        dist = np.full(101, 6.0)
        dist[50] = 1.0  # one-frame dip below threshold
        a, b = series_from_distance(dist)
        state = estimate_grasper_state(a, b, GrasperEstimatorConfig(window=15, threshold_cm=4.0))
        # filter arithmetic: window mean is (14*6 + 1)/15 = 5.67 > 4
        assert not state.any()

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            estimate_grasper_state(np.zeros((5, 3)), np.zeros((4, 3)))

    @settings(max_examples=50)
    @given(
        seed=st.integers(0, 2**32 - 1),
        low=st.floats(1.0, 5.0),
        high=st.floats(5.1, 10.0),
    )
    def test_monotone_in_threshold(self, seed, low, high):
        rng = np.random.default_rng(seed)
        dist = rng.uniform(1.0, 8.0, 120)
        a, b = series_from_distance(dist)
        s_low = estimate_grasper_state(a, b, GrasperEstimatorConfig(window=7, threshold_cm=low))
        s_high = estimate_grasper_state(a, b, GrasperEstimatorConfig(window=7, threshold_cm=high))
        # raising the threshold never turns a closed frame open
        assert np.all(s_high >= s_low)

    def test_moving_average_edges_use_available_samples(self):
        x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        out = moving_average_centered(x, 3)
        assert out[0] == pytest.approx((1 + 2) / 2)
        assert out[2] == pytest.approx(3.0)
        assert out[-1] == pytest.approx((4 + 5) / 2)


class TestFsrVoltage:
    def test_equal_resistances_give_half_supply(self):
        m = FsrChannelModel(v_cc=5.0, r_series_ohm=10_000, r_pressed_ohm=10_000, r_released_ohm=10_001)
        assert fsr_voltage(m, pressed=True) == pytest.approx(2.5, rel=1e-9)

    def test_released_large_resistance_near_zero(self):
        m = FsrChannelModel(v_cc=5.0, r_series_ohm=10_000, r_released_ohm=10_000_000)
        assert fsr_voltage(m, pressed=False) < 0.01

    def test_divider_formula_direct_substitution(self):
        # 10k series over 2.5k FSR on 5 V: 10/(10+2.5) * 5 = 4.0
        m = FsrChannelModel(v_cc=5.0, r_series_ohm=10_000, r_pressed_ohm=2_500)
        assert fsr_voltage(m, pressed=True) == pytest.approx(4.0)

    def test_noise_clamped_to_supply(self):
        m = FsrChannelModel(noise_sd_v=100.0)
        rng = np.random.default_rng(0)
        vals = [fsr_voltage(m, True, rng) for _ in range(200)]
        assert all(0.0 <= v <= 5.0 for v in vals)

    def test_invalid_model_rejected(self):
        with pytest.raises(ValueError):
            FsrChannelModel(r_series_ohm=0)
        with pytest.raises(ValueError):
            FsrChannelModel(r_pressed_ohm=5000, r_released_ohm=100)


class TestPedalThreshold:
    def test_cleanly_separated_voltages_reach_perfect_f1(self):
        rng = np.random.default_rng(1)
        truth = (rng.random(400) < 0.4).astype(np.int8)
        volts = np.where(truth == 1, 4.0, 0.2) + rng.normal(0, 0.05, 400)
        th, f1 = calibrate_pedal_threshold(volts, truth)
        assert f1 == 1.0
        # recall-favoring tie rule: lowest perfect cut, just above the released cluster
        assert volts[truth == 0].max() < th <= volts[truth == 1].min()

    def test_degenerate_labels_rejected(self):
        with pytest.raises(ValueError):
            calibrate_pedal_threshold(np.linspace(0, 5, 10), np.zeros(10))

    def test_tie_breaks_toward_lowest_threshold(self):
        volts = np.array([0.0, 1.0, 2.0, 3.0])
        truth = np.array([0, 1, 1, 1])
        # any threshold in (0, 1] is perfect; grid point 0.5 and 1.0 both tie
        th, f1 = calibrate_pedal_threshold(volts, truth, grid=np.array([1.0, 0.5]))
        assert f1 == 1.0
        assert th == 0.5

    def test_fixed_point_of_grid_search(self):
        rng = np.random.default_rng(2)
        truth = (rng.random(300) < 0.5).astype(np.int8)
        volts = np.where(truth == 1, 3.5, 0.5) + rng.normal(0, 0.7, 300)
        th1, f1_1 = calibrate_pedal_threshold(volts, truth)
        th2, f1_2 = calibrate_pedal_threshold(volts, truth)
        assert th1 == th2 and f1_1 == f1_2


class TestBinarize:
    def test_all_below_threshold(self):
        assert not binarize_pedal(np.full(10, 0.3), 1.0).any()

    def test_boundary_is_inclusive(self):
        assert binarize_pedal(np.array([1.0]), 1.0)[0] == 1

    def test_above_threshold(self):
        assert binarize_pedal(np.array([2.0]), 1.0)[0] == 1
