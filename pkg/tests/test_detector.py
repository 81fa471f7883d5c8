import json

import numpy as np
import pytest

from ews.core import DetectorConfig, derive_seed, rng
from ews.detector import (DEFAULT_GRID, VARIANCE_FLOOR, CorruptStreamError,
                          DetectionReport, SRState, build_shifts,
                          calibrate_threshold, null_maxima, run_sr,
                          score_detection, shifts_for, sr_direct,
                          sr_recursion_equivalence_check, sr_recursive,
                          sr_step, standardize_stream,
                          standardized_innovations, threshold_from_maxima)

ONE_SHIFT = DetectorConfig(m=1, alpha=0.5, beta=0.9, threshold=np.inf)


# -- shift set -------------------------------------------------------------

def test_range_six_gives_unit_steps():
    np.testing.assert_allclose(build_shifts([0.0, 6.0, 3.0], 6),
                               [1, 2, 3, 4, 5, 6])


def test_single_shift_is_the_range():
    assert build_shifts([2.0, -1.5, 0.0], 1).tolist() == [3.5]


def test_hand_worked_shift_set():
    np.testing.assert_allclose(build_shifts([-2.0, 4.0], 4),
                               [1.5, 3.0, 4.5, 6.0])


def test_flat_history_gets_floor_shifts():
    assert build_shifts([1.0, 1.0, 1.0], 3).tolist() == [0.1, 0.1, 0.1]


def test_shifts_come_from_standardised_burn_in():
    H = np.r_[[0.0, 10.0, 20.0], np.full(20, 100.0)]
    # z-scores of the head are -1.22, 0, 1.22
    assert shifts_for(H, 1, 3)[0] == pytest.approx(np.sqrt(6), rel=1e-12)


# -- one step --------------------------------------------------------------

def test_zero_exponent_gives_unit_statistic():
    state = SRState.start(0.0, [1.0])
    # xi = d / 2 with mu = 0 and sigma = 1
    sr_w, alarmed = sr_step(state, 0.5, 0.5, 0.9)
    assert sr_w == pytest.approx(1.0) and not alarmed


def test_very_negative_innovation_shrinks_accumulators():
    state = SRState.start(0.0, [0.5, 1.0, 2.0])
    state.sr = np.array([5.0, 5.0, 5.0])
    values = []
    for _ in range(8):
        state.mu_hat, state.sigma2_hat = 0.0, 1.0
        values.append(sr_step(state, -10.0, 0.5, 0.9)[0])
    assert all(b < a for a, b in zip(values, values[1:]))
    assert values[-1] < 0.01


def test_restart_resets_and_keeps_moments():
    state = SRState.start(0.0, [1.0])
    state.sigma2_hat = 2.0
    sr_w, alarmed = sr_step(state, 5.0, 0.5, 0.9, threshold=1.0)
    assert alarmed and sr_w > 1.0
    assert state.sr.tolist() == [0.0]
    assert (state.mu_hat, state.sigma2_hat) == (0.0, 2.0)
    assert state.alarms == [2]
    sr_step(state, 0.1, 0.5, 0.9, threshold=1.0)
    assert state.t == 3


def test_halt_mode_stops_the_run():
    state = SRState.start(0.0, [1.0])
    sr_step(state, 5.0, 0.5, 0.9, threshold=1.0, restart=False)
    assert state.halted
    assert np.isnan(sr_step(state, 0.0, 0.5, 0.9)[0])
    traj, alarms, _ = run_sr([0.0, 5.0, 0.0, 0.0],
                             DetectorConfig(m=1, threshold=1.0,
                                            restart_after_alarm=False),
                             shifts=[1.0], standardize=False)
    assert alarms == [1]
    assert np.isnan(traj[1:]).all()


def test_unit_smoothing_freezes_the_moments():
    state = SRState.start(2.0, [1.0])
    for h in rng(1).standard_normal(50):
        sr_step(state, h, 1.0, 1.0)
        assert (state.mu_hat, state.sigma2_hat) == (2.0, 1.0)


def test_accumulators_stay_non_negative():
    state = SRState.start(0.0, build_shifts([-3.0, 3.0], 6))
    for h in 3 * rng(2).standard_normal(200):
        sr_step(state, h, 0.5, 0.9)
        assert np.all(state.sr >= 0)
        assert state.sigma2_hat >= 0


def test_round_off_is_not_amplified():
    H = -507.4 + 1e-13 * rng(14).standard_normal(40)
    assert np.abs(standardize_stream(H, 20)).max() < 1e-11


def test_constant_stream_is_finite():
    traj, alarms, shifts = run_sr(np.full(30, 4.0), ONE_SHIFT)
    assert np.isfinite(traj).all() and alarms == []
    assert shifts.tolist() == [0.1]


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_corrupt_values_rejected(bad):
    with pytest.raises(CorruptStreamError, match="entropy stream corrupted"):
        sr_step(SRState.start(0.0, [1.0]), bad, 0.5, 0.9)
    with pytest.raises(CorruptStreamError):
        run_sr([0.0, 1.0, bad], ONE_SHIFT)


def test_uncalibrated_threshold_rejected():
    with pytest.raises(ValueError):
        run_sr([0.0, 1.0, 2.0], DetectorConfig(threshold="calibrate"))


def test_innovations_match_the_stepping_recursion():
    H = rng(3).standard_normal(40)
    xi = standardized_innovations(H, 0.7, 0.8)
    state = SRState.start(H[0], [1.0])
    for t in range(1, 40):
        z = (H[t] - state.mu_hat) / np.sqrt(max(state.sigma2_hat,
                                                VARIANCE_FLOOR))
        assert z == pytest.approx(xi[t - 1], rel=1e-12)
        sr_step(state, H[t], 0.7, 0.8)


# -- recursion -------------------------------------------------------------

def test_unit_ratios_count_time():
    np.testing.assert_allclose(sr_direct(np.ones(7)), np.arange(1, 8))
    np.testing.assert_allclose(sr_recursive(np.ones(7)), np.arange(1, 8))


def test_single_ratio():
    assert sr_direct([1.7])[0] == sr_recursive([1.7])[0] == 1.7


def test_random_ratios_agree():
    for s in range(20):
        assert sr_recursion_equivalence_check(rng(4, s).uniform(0.5, 2, 100))


# -- invariances -----------------------------------------------------------

def test_shift_order_does_not_matter():
    H = rng(5).standard_normal(120)
    shifts = np.array([0.3, 1.0, 2.5, 4.0])
    cfg = DetectorConfig(m=4, threshold=50.0)
    a = run_sr(H, cfg, shifts=shifts)
    b = run_sr(H, cfg, shifts=shifts[::-1])
    np.testing.assert_allclose(a[0], b[0], rtol=1e-12)
    assert a[1] == b[1]


def test_adding_a_constant_changes_nothing():
    H = rng(6).standard_normal(150).cumsum() * 0.1
    cfg = DetectorConfig(m=6, threshold=20.0)
    for standardize in (True, False):
        a = run_sr(H, cfg, standardize=standardize)
        b = run_sr(H + 37.0, cfg, standardize=standardize)
        np.testing.assert_allclose(a[0], b[0], rtol=1e-9)
        assert a[1] == b[1]


def test_standardised_stream_has_unit_burn_in():
    z = standardize_stream(rng(7).normal(5, 3, 200), 50)
    assert z[:50].mean() == pytest.approx(0, abs=1e-12)
    assert z[:50].std() == pytest.approx(1, abs=1e-12)


def test_alarms_fire_after_a_mean_shift():
    H = np.r_[rng(8).standard_normal(100), 4 + rng(9).standard_normal(20)]
    _, alarms, _ = run_sr(H, DetectorConfig(m=6, threshold=1e4), burn_in=50)
    assert min(a for a in alarms if a >= 100) <= 102


# -- calibration -----------------------------------------------------------

def iid_stream(seed):
    return rng(seed).standard_normal(501)


def test_full_pfa_target_gives_grid_minimum():
    A, attained, _ = threshold_from_maxima([5.0, 9.0], 1.0)
    assert A == DEFAULT_GRID[0] and attained


def test_threshold_is_exceeded_by_at_most_the_target_fraction():
    maxima = rng(10).lognormal(3, 2, 400)
    for target in (0.5, 0.1, 0.01):
        A, _, pfa = threshold_from_maxima(maxima, target)
        assert pfa == (maxima > A).mean() <= target


def test_unreachable_target_warns_and_uses_grid_max():
    with pytest.warns(UserWarning, match="not attained"):
        cal = calibrate_threshold(lambda s: np.r_[0, 0, 1e6], 0.1, 3, 3, 0,
                                  DetectorConfig(m=1), burn_in=2,
                                  grid=np.logspace(-1, 2, 31))
    assert not cal.attained and cal.threshold == 100.0


def test_threshold_monotone_in_target():
    cfg = DetectorConfig(m=1, threshold=np.inf)
    As = [calibrate_threshold(iid_stream, p, 500, 100, 11, cfg).threshold
          for p in (0.5, 0.1, 0.01)]
    assert As[0] <= As[1] <= As[2]


def test_calibrated_threshold_holds_its_false_alarm_rate():
    cfg = DetectorConfig(m=1, alpha=0.5, beta=0.9, threshold=np.inf)
    shifts = [1.0]

    def maxima(seed0):
        out = []
        for i in range(200):
            traj, _, _ = run_sr(iid_stream(derive_seed(seed0, i)), cfg,
                                shifts=shifts, standardize=False)
            out.append(traj.max())
        return np.array(out)

    A, _, _ = threshold_from_maxima(maxima(12), 0.1)
    fresh = maxima(13)
    assert abs((fresh > A).mean() - 0.1) <= 0.05


def test_null_maxima_ignore_the_configured_threshold():
    H = [iid_stream(s) for s in range(3)]
    a = null_maxima(H, DetectorConfig(m=2, threshold=1.0), 500)
    b = null_maxima(H, DetectorConfig(m=2, threshold=np.inf), 500)
    np.testing.assert_array_equal(a, b)


# -- scoring and reports ---------------------------------------------------

def test_late_alarm_scores_a_delay():
    s = score_detection([510], 500)
    assert (s.pfa_flag, s.delay, s.nd_flag) == (0, 10.0, 0)


def test_no_alarm_is_a_miss():
    s = score_detection([], 500)
    assert s.nd_flag == 1 and s.delay is None and s.pfa_flag == 0


def test_false_alarm_then_detection():
    s = score_detection([490, 507], 500)
    assert (s.pfa_flag, s.delay, s.nd_flag) == (1, 7.0, 0)


def test_alarm_past_horizon_is_a_miss():
    assert score_detection([490, 1200], 500, horizon=999).nd_flag == 1


def test_report_serialisation(tmp_path):
    rep = DetectionReport([3], [53], ["53"], np.array([0.5, 1.0, 9.0, 2.0]),
                          np.array([1.0, 2.0]), 5.0, {"m": 2})
    payload = json.loads(rep.to_json(tmp_path / "r.json").read_text())
    assert payload["alarms"] == [{"window": 3, "time": 53, "timestamp": "53"}]
    rows = rep.sr_to_csv(tmp_path / "sr.csv",
                         [(i, i + 50) for i in range(5)]).read_text().split()
    assert rows[0] == "window_start,window_end,sr_w,alarm"
    assert rows[1] == "0,50,,0"
    assert rows[4] == "3,53,9.0,1"
