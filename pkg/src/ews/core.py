"""Shared data types, windowing and seeding helpers."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class InputError(ValueError):
    """Malformed input data (bad CSV row, missing values, bad prices)."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class ConfigError(ValueError):
    """A configuration value violates a documented invariant."""


@dataclass(frozen=True)
class SeriesFrame:
    """Target series plus covariate columns sharing one ordered index.

    Timestamps are only carried for reporting; all computation is positional.
    """

    timestamps: np.ndarray
    target: np.ndarray
    covariates: np.ndarray
    target_name: str = "y"
    covariate_names: tuple = ()

    def __post_init__(self):
        target = np.asarray(self.target, dtype=float)
        covariates = np.asarray(self.covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates[:, None]
        timestamps = np.asarray(self.timestamps)
        T = target.shape[0]
        if target.ndim != 1 or T < 1:
            raise ConfigError("target must be a non-empty vector")
        if covariates.shape[0] != T or timestamps.shape[0] != T:
            raise ConfigError("target, covariates and timestamps differ in length")
        if not (np.all(np.isfinite(target)) and np.all(np.isfinite(covariates))):
            raise ConfigError("missing or non-finite values in frame")
        if T > 1 and not _strictly_increasing(timestamps):
            raise ConfigError("timestamps must be strictly increasing")
        names = tuple(self.covariate_names) or tuple(
            f"x{j + 1}" for j in range(covariates.shape[1]))
        if len(names) != covariates.shape[1]:
            raise ConfigError("one name per covariate column required")
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "covariate_names", names)

    def __len__(self):
        return self.target.shape[0]

    @property
    def n_covariates(self):
        return self.covariates.shape[1]

    def to_returns(self):
        """Log-return transform of every column; drops the first timestamp."""
        return SeriesFrame(
            timestamps=self.timestamps[1:],
            target=log_returns(self.target),
            covariates=np.column_stack(
                [log_returns(c) for c in self.covariates.T]),
            target_name=self.target_name,
            covariate_names=self.covariate_names,
        )


def _strictly_increasing(ts):
    try:
        return bool(np.all(ts[1:] > ts[:-1]))
    except TypeError:
        return all(a < b for a, b in zip(ts[:-1], ts[1:]))


@dataclass(frozen=True)
class WindowPlan:
    """Sliding-window layout and lag-search bounds."""

    delta: int = 50
    step: int = 1
    max_ar_order: int = 10
    max_cov_lag: int = 10

    def __post_init__(self):
        if self.delta < 10:
            raise ConfigError("delta must be >= 10")
        if self.step < 1:
            raise ConfigError("step must be >= 1")
        if self.max_ar_order < 1 or self.max_cov_lag < 1:
            raise ConfigError("max_ar_order and max_cov_lag must be >= 1")
        if self.delta <= max(self.max_ar_order, self.max_cov_lag) + 5:
            raise ConfigError(
                "delta must exceed max(max_ar_order, max_cov_lag) + 5")

    @property
    def burn(self):
        """Leading rows of each window consumed by lags."""
        return max(self.max_ar_order, self.max_cov_lag)


@dataclass(frozen=True)
class DetectorConfig:
    """Parameters of the weighted Shiryaev-Roberts detector.

    ``threshold`` is a positive number or the string ``"calibrate"``.
    """

    m: int = 6
    alpha: float = 0.5
    beta: float = 0.9
    threshold: float | str = 1000.0
    restart_after_alarm: bool = True

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0 < self.beta < 1:
            raise ConfigError("beta must lie in (0, 1)")
        if isinstance(self.threshold, str):
            if self.threshold != "calibrate":
                raise ConfigError("threshold must be a number or 'calibrate'")
        elif not self.threshold > 0:
            raise ConfigError("threshold must be positive")


def make_windows(plan: WindowPlan, T: int) -> list[tuple[int, int]]:
    """Enumerate inclusive ``(t0, t0 + delta)`` intervals that fit in ``T`` rows.

    >>> make_windows(WindowPlan(delta=50), 52)
    [(0, 50), (1, 51)]
    """
    if T < plan.delta:
        raise ConfigError("series shorter than window")
    starts = range(0, T - plan.delta, plan.step)
    return [(t0, t0 + plan.delta) for t0 in starts]


def log_returns(prices) -> np.ndarray:
    """``ln(p[i+1] / p[i])`` for a vector of positive prices."""
    p = np.asarray(prices, dtype=float)
    if np.any(~(p > 0)):
        raise InputError("non-positive price")
    return np.diff(np.log(p))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed for ``(seed, *keys)``."""
    ss = np.random.SeedSequence([int(seed) % 2**64, *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(
        [int(seed) % 2**64, *[int(k) for k in keys]]))


# -- CSV ingestion ----------------------------------------------------------

def _parse_timestamp(text):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return np.datetime64(text)


def read_frame(path, returns=False) -> SeriesFrame:
    """Read ``timestamp, target, covariates...`` CSV with a header row.

    Rows with an empty or non-numeric-missing field (``""``, ``NA``, ``nan``)
    are dropped. Any other unparseable field raises :class:`InputError`
    carrying the 1-based file line number.
    """
    missing = {"", "na", "nan", "null", "none"}
    stamps, rows = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError("empty file", row=1)
        if len(header) < 3:
            raise InputError("need timestamp, target and >=1 covariate column",
                             row=1)
        width = len(header)
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != width:
                raise InputError(f"row {lineno}: expected {width} fields",
                                 row=lineno)
            if any(v.strip().lower() in missing for v in rec[1:]):
                continue
            try:
                stamp = _parse_timestamp(rec[0])
                values = [float(v) for v in rec[1:]]
            except ValueError:
                raise InputError(f"row {lineno}: unparseable value", row=lineno)
            stamps.append(stamp)
            rows.append(values)
    if not rows:
        raise InputError("no complete rows", row=None)
    data = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(data)):
        raise InputError("non-finite value in input")
    try:
        frame = SeriesFrame(
            timestamps=np.asarray(stamps),
            target=data[:, 0],
            covariates=data[:, 1:],
            target_name=header[1].strip(),
            covariate_names=tuple(h.strip() for h in header[2:]),
        )
    except ConfigError as exc:
        raise InputError(str(exc))
    return frame.to_returns() if returns else frame


def write_frame(frame: SeriesFrame, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", frame.target_name, *frame.covariate_names])
        for ts, y, xs in zip(frame.timestamps, frame.target, frame.covariates):
            w.writerow([str(ts), repr(float(y)), *(repr(float(x)) for x in xs)])
    return path


def format_timestamp(ts):
    if isinstance(ts, np.datetime64):
        return str(ts)
    if isinstance(ts, (np.integer, int)):
        return int(ts)
    return str(ts)
