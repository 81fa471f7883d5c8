"""Frame -> entropy stream -> detection, wiring the per-window steps."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, DetectorConfig, SeriesFrame, WindowPlan, \
    derive_seed, format_timestamp, make_windows
from .detector import DEFAULT_GRID, Calibration, DetectionReport, null_maxima, \
    run_sr, threshold_from_maxima
from .entropy import VARIANTS, EntropySeries, ForestParams, conditional_entropy, \
    window_ranks
from .forest import fit_forest, llf_predict
from .linproj import fit_ar, lag_matrix, project_on_covariates

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    plan: WindowPlan = field(default_factory=WindowPlan)
    variant: str = "baseline"
    forest: ForestParams = field(default_factory=ForestParams)
    quad_points: int = 201

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.quad_points < 51 or self.quad_points % 2 == 0:
            raise ConfigError("quad_points must be odd and >= 51")


def window_inputs(frame: SeriesFrame, t0, t1, config: PipelineConfig, seed=0):
    """Residuals and conditioners for the window ``[t0, t1]``.

    Returns ``(e, cond, info)`` where ``cond`` is the linear projection for
    baseline/rank variants and the local linear forest fit otherwise.
    """
    plan = config.plan
    y = frame.target[t0:t1 + 1]
    X = frame.covariates[t0:t1 + 1]
    start = plan.burn
    ar = fit_ar(y, plan.max_ar_order, start=start)
    e = ar.residuals
    n = len(e)
    X_hist = X[start - plan.max_cov_lag:]
    proj = project_on_covariates(e, X_hist, plan.max_cov_lag)
    info = {"k": ar.order, "l": proj.lag}
    if config.variant in ("llf", "llf_rank"):
        feats = lag_matrix(X_hist, proj.lag, n)
        p = config.forest
        model = fit_forest(feats, e, n_trees=p.n_trees, min_leaf=p.min_leaf,
                           mtry=p.mtry, honest=p.honest, seed=seed)
        cond = llf_predict(model, feats, ridge=p.ridge)
    else:
        cond = proj.fitted
    return e, cond, info


def entropy_stream(frame: SeriesFrame, config: PipelineConfig, seed=0,
                   windows=None) -> EntropySeries:
    """Conditional-entropy estimate for every sliding window of ``frame``."""
    if windows is None:
        windows = make_windows(config.plan, len(frame))
    bounded = config.variant in ("rank", "llf_rank")
    values, info = [], []
    for w, (t0, t1) in enumerate(windows):
        e, cond, meta = window_inputs(frame, t0, t1, config,
                                      seed=derive_seed(seed, w, 1))
        if bounded:
            e, cond = window_ranks(e), window_ranks(cond)
        values.append(conditional_entropy(
            e, cond, bounded=bounded, quad_points=config.quad_points,
            params=config.forest, seed=derive_seed(seed, w, 2)))
        info.append(meta)
        log.debug("window %d [%d, %d] k=%d l=%d H=%.4f", w, t0, t1,
                  meta["k"], meta["l"], values[-1])
    return EntropySeries(np.array(values), list(windows), config.variant, info)


def alarm_report(frame: SeriesFrame, entropy: EntropySeries,
                 detector: DetectorConfig, threshold=None, burn_in=None,
                 extra_config=None) -> DetectionReport:
    """Run the detector on ``entropy`` and map alarms back to ``frame``.

    An alarm on window ``w`` is dated at the window's last row. ``burn_in``
    (number of leading entropy values used for standardisation and the
    shift set) defaults to the window length.
    """
    A = detector.threshold if threshold is None else threshold
    if isinstance(A, str):
        raise ConfigError("threshold must be calibrated before detection")
    if burn_in is None:
        burn_in = entropy.window_index[0][1] - entropy.window_index[0][0]
    traj, alarms, shifts = run_sr(entropy.values, detector, burn_in=burn_in,
                                  threshold=A)
    times = [entropy.window_index[w][1] for w in alarms]
    stamps = [format_timestamp(frame.timestamps[t]) for t in times]
    config = {"m": detector.m, "alpha": detector.alpha, "beta": detector.beta,
              "restart_after_alarm": detector.restart_after_alarm,
              "burn_in": int(burn_in), "variant": entropy.variant}
    config.update(extra_config or {})
    return DetectionReport(alarms=list(alarms), alarm_times=times,
                           alarm_timestamps=stamps, sr_trajectory=traj,
                           shifts=shifts, threshold=float(A), config=config,
                           entropy=entropy)


def detect(frame: SeriesFrame, config: PipelineConfig,
           detector: DetectorConfig, seed=0, threshold=None) -> DetectionReport:
    """Entropy stream plus weighted SR monitoring for one frame."""
    entropy = entropy_stream(frame, config, seed=seed)
    return alarm_report(frame, entropy, detector, threshold,
                        burn_in=config.plan.delta)


def null_streams(null_frames, config: PipelineConfig, seeds):
    """Entropy streams for change-free frames, one per seed."""
    return [entropy_stream(f, config, seed=s).values
            for f, s in zip(null_frames, seeds)]


def calibrate_on_frames(null_frames, config: PipelineConfig,
                        detector: DetectorConfig, target_pfa=0.1, seeds=None,
                        grid=DEFAULT_GRID, streams=None) -> Calibration:
    """Threshold whose false-alarm fraction over ``null_frames`` is at most
    ``target_pfa``; a false alarm is any alarm anywhere in a null stream.

    Pass precomputed entropy ``streams`` to skip the pipeline.
    """
    seeds = list(range(len(null_frames))) if seeds is None else list(seeds)
    if streams is None:
        streams = null_streams(null_frames, config, seeds)
    horizon = max(len(s) for s in streams)
    maxima = null_maxima(streams, detector, horizon,
                         burn_in=config.plan.delta)
    A, attained, pfa = threshold_from_maxima(maxima, target_pfa, grid)
    if not attained:
        log.warning("target PFA %.3f not attained on threshold grid", target_pfa)
    return Calibration(A, attained, pfa, target_pfa, horizon, len(streams),
                       int(seeds[0]) if seeds else 0)
