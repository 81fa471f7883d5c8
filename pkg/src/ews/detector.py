"""Weighted Shiryaev-Roberts detection on an entropy stream.

Each new value ``H_t`` is standardised with exponentially smoothed moments,
``xi_t = (H_t - mu_{t-1}) / sigma_{t-1}``, and fed to one SR accumulator per
candidate mean shift ``d``::

    SR_t(d) = (1 + SR_{t-1}(d)) * exp(d * (xi_t - d / 2))

The alarm statistic is the average over shifts. Moments update only on
non-alarm steps (``mu`` with weight ``alpha`` on the past, ``sigma^2`` with
``beta``), starting from ``mu_1 = H_1`` and ``sigma_1^2 = 1``.

Before a run the stream is put on a unit scale with the mean and standard
deviation of its first ``burn_in`` values, so the unit starting variance
matches the data, and the shift set is built from the range of that
standardised burn-in.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import DetectorConfig

VARIANCE_FLOOR = 1e-12
SHIFT_FLOOR = 0.1
FLAT_TOLERANCE = 1e-9  # relative spread below which a burn-in is flat


class CorruptStreamError(ValueError):
    pass


def build_shifts(history, m) -> np.ndarray:
    """``i * range(history) / m`` for ``i = 1..m``; zero range gives 0.1s."""
    h = np.asarray(history, dtype=float)
    if len(h) < 2:
        raise ValueError("need at least two history values")
    if m < 1:
        raise ValueError("m must be >= 1")
    span = float(np.max(h) - np.min(h))
    if not span > 0:
        return np.full(m, SHIFT_FLOOR)
    return np.arange(1, m + 1) * span / m


def standardized_innovations(values, alpha, beta) -> np.ndarray:
    """``xi_2..xi_n`` from the smoothing recursion, with no alarms."""
    H = np.asarray(values, dtype=float)
    mu, var = H[0], 1.0
    out = np.empty(len(H) - 1)
    for t in range(1, len(H)):
        out[t - 1] = (H[t] - mu) / np.sqrt(max(var, VARIANCE_FLOOR))
        mu = alpha * mu + (1 - alpha) * H[t]
        var = beta * var + (1 - beta) * (H[t] - mu) ** 2
    return out


@dataclass
class SRState:
    sr: np.ndarray
    mu_hat: float
    sigma2_hat: float
    shifts: np.ndarray
    t: int = 1
    alarms: list = field(default_factory=list)
    halted: bool = False

    @classmethod
    def start(cls, h1, shifts):
        if not np.isfinite(h1):
            raise CorruptStreamError("entropy stream corrupted")
        shifts = np.asarray(shifts, dtype=float)
        return cls(sr=np.zeros(len(shifts)), mu_hat=float(h1), sigma2_hat=1.0,
                   shifts=shifts)

    @property
    def sr_w(self):
        return float(np.mean(self.sr))


def sr_step(state: SRState, h_t, alpha, beta, threshold=np.inf,
            restart=True):
    """Advance ``state`` by one observation in place.

    Returns ``(sr_w, alarmed)``. On an alarm the accumulators reset to zero
    when ``restart`` is true, otherwise the state halts; the smoothed
    moments are left untouched on alarm steps.
    """
    if not np.isfinite(h_t):
        raise CorruptStreamError("entropy stream corrupted")
    if state.halted:
        return np.nan, False
    state.t += 1
    xi = (h_t - state.mu_hat) / np.sqrt(max(state.sigma2_hat, VARIANCE_FLOOR))
    d = state.shifts
    with np.errstate(over="ignore"):
        state.sr = (1.0 + state.sr) * np.exp(d * (xi - d / 2.0))
    sr_w = float(np.mean(state.sr))
    if sr_w > threshold:
        state.alarms.append(state.t)
        if restart:
            state.sr = np.zeros_like(state.sr)
        else:
            state.halted = True
        return sr_w, True
    state.mu_hat = alpha * state.mu_hat + (1 - alpha) * h_t
    state.sigma2_hat = beta * state.sigma2_hat + (1 - beta) * (h_t - state.mu_hat) ** 2
    return sr_w, False


def standardize_stream(values, burn_in):
    """z-scores of ``values`` using the moments of the first ``burn_in``.

    A burn-in that is flat up to round-off keeps unit scale, so float noise
    in a constant stream is not blown up into large innovations.
    """
    H = np.asarray(values, dtype=float)
    head = H[:max(burn_in, 2)]
    mean, sd = float(np.mean(head)), float(np.std(head))
    if not sd > FLAT_TOLERANCE * (1.0 + abs(mean)):
        sd = 1.0
    return (H - mean) / sd


def shifts_for(values, m, burn_in):
    """Shift set from the range of the standardised first ``burn_in`` values."""
    return build_shifts(standardize_stream(values, burn_in)[:max(burn_in, 2)], m)


def run_sr(values, config: DetectorConfig, shifts=None, burn_in=50,
           threshold=None, standardize=True):
    """Run the detector over a whole stream.

    Returns ``(sr_trajectory, alarm_positions, shifts)``. The trajectory has
    ``len(values) - 1`` entries (NaN after a halt); alarm positions are
    0-based indices into ``values``. With ``standardize`` the stream is
    z-scored on its burn-in first (see :func:`standardize_stream`).
    """
    H = np.asarray(values, dtype=float)
    if len(H) < 2:
        raise ValueError("need at least two entropy values")
    if not np.all(np.isfinite(H)):
        raise CorruptStreamError("entropy stream corrupted")
    if standardize:
        H = standardize_stream(H, burn_in)
    if shifts is None:
        shifts = build_shifts(H[:max(burn_in, 2)], config.m)
    A = config.threshold if threshold is None else threshold
    if isinstance(A, str):
        raise ValueError("threshold must be calibrated before running")
    state = SRState.start(H[0], shifts)
    traj = np.full(len(H) - 1, np.nan)
    for t in range(1, len(H)):
        if state.halted:
            break
        traj[t - 1], _ = sr_step(state, H[t], config.alpha, config.beta, A,
                                 config.restart_after_alarm)
    return traj, [a - 1 for a in state.alarms], np.asarray(shifts)


# -- recursion check ---------------------------------------------------------

def sr_direct(ratios) -> np.ndarray:
    """``SR_t = sum_k prod_{i=k..t} r_i`` evaluated without recursion."""
    r = np.asarray(ratios, dtype=float)
    out = np.empty(len(r))
    for t in range(len(r)):
        tail = np.cumprod(r[t::-1])  # prod r_t..r_k for k = t, t-1, ..., 0
        out[t] = tail.sum()
    return out


def sr_recursive(ratios) -> np.ndarray:
    r = np.asarray(ratios, dtype=float)
    out = np.empty(len(r))
    prev = 0.0
    for t, x in enumerate(r):
        prev = (1.0 + prev) * x
        out[t] = prev
    return out


def sr_recursion_equivalence_check(likelihood_ratios, rtol=1e-10) -> bool:
    a = sr_direct(likelihood_ratios)
    b = sr_recursive(likelihood_ratios)
    return bool(np.all(np.abs(a - b) <= rtol * np.abs(a)))


# -- threshold calibration ---------------------------------------------------

DEFAULT_GRID = np.logspace(-1, 300, 3011)  # ten points per decade


@dataclass(frozen=True)
class Calibration:
    threshold: float
    attained: bool
    achieved_pfa: float
    target_pfa: float
    horizon: int
    n_mc: int
    seed: int

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


def null_maxima(streams, config: DetectorConfig, horizon, burn_in=50):
    """Largest ``SR^w`` before ``horizon`` for each null stream (no alarms)."""
    out = []
    for H in streams:
        traj, _, _ = run_sr(np.asarray(H)[:horizon], config, burn_in=burn_in,
                            threshold=np.inf)
        out.append(np.nanmax(traj) if len(traj) else 0.0)
    return np.array(out)


def threshold_from_maxima(maxima, target_pfa, grid=DEFAULT_GRID):
    """Smallest grid value whose exceedance fraction is ``<= target_pfa``."""
    if not 0 < target_pfa <= 1:
        raise ValueError("target_pfa must lie in (0, 1]")
    maxima = np.asarray(maxima, dtype=float)
    pfa = (maxima[None, :] > grid[:, None]).mean(axis=1)
    ok = np.flatnonzero(pfa <= target_pfa)
    if len(ok) == 0:
        return float(grid[-1]), False, float(pfa[-1])
    return float(grid[ok[0]]), True, float(pfa[ok[0]])


def calibrate_threshold(null_stream_generator, target_pfa, horizon, n_mc,
                        seed, config: DetectorConfig, burn_in=50,
                        grid=DEFAULT_GRID) -> Calibration:
    """Monte Carlo threshold: false-alarm fraction before ``horizon``.

    ``null_stream_generator(seed)`` returns one entropy stream with no
    change; run ``i`` receives ``derive_seed(seed, i)``.
    """
    from .core import derive_seed

    streams = [null_stream_generator(derive_seed(seed, i)) for i in range(n_mc)]
    maxima = null_maxima(streams, config, horizon, burn_in)
    A, attained, pfa = threshold_from_maxima(maxima, target_pfa, grid)
    if not attained:
        warnings.warn("target PFA not attained on threshold grid; using grid max")
    return Calibration(A, attained, pfa, target_pfa, horizon, n_mc, seed)


# -- scoring and reports -----------------------------------------------------

@dataclass(frozen=True)
class Score:
    pfa_flag: int
    delay: float | None
    nd_flag: int


def score_detection(alarms, theta, horizon=None) -> Score:
    """Score alarm times against the true change time ``theta``."""
    alarms = sorted(alarms)
    pfa = int(bool(alarms) and alarms[0] < theta)
    after = [a for a in alarms if a >= theta and (horizon is None or a <= horizon)]
    if after:
        return Score(pfa, float(after[0] - theta), 0)
    return Score(pfa, None, 1)


@dataclass
class DetectionReport:
    alarms: list           # window positions (0-based)
    alarm_times: list      # time index of each alarm window's last row
    alarm_timestamps: list
    sr_trajectory: np.ndarray
    shifts: np.ndarray
    threshold: float
    config: dict
    entropy: object = None  # the EntropySeries that was monitored

    def to_json(self, path, extra=None) -> Path:
        payload = {
            "alarms": [
                {"window": int(w), "time": int(t), "timestamp": s}
                for w, t, s in zip(self.alarms, self.alarm_times,
                                   self.alarm_timestamps)
            ],
            "threshold": self.threshold,
            "shifts": [float(x) for x in self.shifts],
            "config": self.config,
        }
        if extra:
            payload.update(extra)
        path = Path(path)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path

    def sr_to_csv(self, path, window_index) -> Path:
        """One row per window; the first window has no SR value."""
        path = Path(path)
        lines = ["window_start,window_end,sr_w,alarm"]
        alarm_set = set(self.alarms)
        for w, (t0, t1) in enumerate(window_index):
            sr = "" if w == 0 else repr(float(self.sr_trajectory[w - 1]))
            lines.append(f"{t0},{t1},{sr},{int(w in alarm_set)}")
        path.write_text("\n".join(lines) + "\n")
        return path
