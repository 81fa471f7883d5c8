import numpy as np
import pytest

from ews.core import ConfigError, DetectorConfig, SeriesFrame, WindowPlan
from ews.entropy import EntropySeries, ForestParams
from ews.pipeline import (PipelineConfig, alarm_report, calibrate_on_frames,
                          detect, entropy_stream, window_inputs)
from ews.simlab import DGPSpec, generate

SMALL = PipelineConfig(forest=ForestParams(n_trees=20))


def small_frame(kind="termination", seed=0, T=120, theta=60):
    return generate(DGPSpec(kind, T=T, theta=theta, seed=seed))


def test_unknown_variant_rejected():
    with pytest.raises(ConfigError):
        PipelineConfig(variant="levels")


def test_window_inputs_align():
    f = small_frame()
    e, cond, info = window_inputs(f, 0, 50, SMALL)
    assert len(e) == len(cond) == 51 - SMALL.plan.burn
    assert 0 <= info["k"] <= 10 and 1 <= info["l"] <= 10


def test_llf_conditioner_replaces_the_projection():
    f = small_frame()
    e, lin, _ = window_inputs(f, 0, 50, SMALL)
    cfg = PipelineConfig(variant="llf", forest=ForestParams(n_trees=20))
    e2, llf, _ = window_inputs(f, 0, 50, cfg)
    np.testing.assert_array_equal(e, e2)
    assert not np.allclose(lin, llf)


def test_stream_has_one_value_per_window():
    f = small_frame()
    es = entropy_stream(f, SMALL)
    assert len(es) == 120 - 1 - 50 + 1
    assert es.window_index[0] == (0, 50)
    assert np.isfinite(es.values).all()
    assert all(set(m) == {"k", "l"} for m in es.info)


def test_stream_is_seed_deterministic():
    f = small_frame()
    a = entropy_stream(f, SMALL, seed=3).values
    b = entropy_stream(f, SMALL, seed=3).values
    assert a.tobytes() == b.tobytes()


def test_alarm_times_are_window_ends():
    f = SeriesFrame(np.arange(1, 21), np.zeros(20), np.zeros((20, 1)))
    es = EntropySeries(np.r_[np.zeros(6), 50.0, 0.0],
                       [(i, i + 10) for i in range(8)], "baseline")
    rep = alarm_report(f, es, DetectorConfig(m=1), threshold=10.0, burn_in=6)
    assert rep.alarms == [6] and rep.alarm_times == [16]
    assert rep.alarm_timestamps == [17]
    assert rep.config["burn_in"] == 6 and rep.entropy is es


def test_uncalibrated_report_rejected():
    es = EntropySeries(np.zeros(4), [(i, i + 10) for i in range(4)],
                       "baseline")
    f = SeriesFrame(np.arange(1, 15), np.zeros(14), np.zeros((14, 1)))
    with pytest.raises(ConfigError):
        alarm_report(f, es, DetectorConfig(threshold="calibrate"))


def test_detect_matches_its_parts():
    f = small_frame(seed=2)
    det = DetectorConfig(m=6, threshold=50.0)
    rep = detect(f, SMALL, det, seed=2)
    es = entropy_stream(f, SMALL, seed=2)
    again = alarm_report(f, es, det, burn_in=50)
    assert rep.alarms == again.alarms
    np.testing.assert_array_equal(rep.sr_trajectory, again.sr_trajectory)


def test_calibration_on_frames():
    frames = [small_frame(seed=s, T=90, theta=90) for s in range(6)]
    cal = calibrate_on_frames(frames, SMALL, DetectorConfig(m=6),
                              target_pfa=0.5, seeds=range(6))
    assert cal.attained and cal.achieved_pfa <= 0.5
    assert cal.n_mc == 6 and cal.horizon == 90 - 50
    cal1 = calibrate_on_frames(frames, SMALL, DetectorConfig(m=6),
                               target_pfa=1.0, seeds=range(6))
    assert cal1.threshold <= cal.threshold


def test_plan_with_step():
    cfg = PipelineConfig(plan=WindowPlan(delta=50, step=10),
                         forest=ForestParams(n_trees=10))
    es = entropy_stream(small_frame(), cfg)
    assert [w[0] for w in es.window_index] == [0, 10, 20, 30, 40, 50, 60]
