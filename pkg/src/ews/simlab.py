"""Synthetic designs with a known change point, and the replication harness.

Row ``i`` of a generated frame is period ``t = i + 1``; ``theta`` rows are
pre-change, so ``theta`` is also the 0-based index of the first post-change
row. ``N(a, b)`` arguments are mean and variance. ``Exp(3)`` and
``Gamma(3, 1)`` follow numpy's scale convention (means 3 and 3).
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .core import ConfigError, DetectorConfig, SeriesFrame, derive_seed, rng

log = logging.getLogger(__name__)

KINDS = ("termination", "inversion", "tail_dependent")


@dataclass(frozen=True)
class DGPSpec:
    kind: str = "termination"
    T: int = 1000
    theta: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown DGP kind {self.kind!r}")
        if not 0 < self.theta <= self.T:
            raise ConfigError("need 0 < theta <= T")

    def with_seed(self, seed):
        return DGPSpec(self.kind, self.T, self.theta, seed)

    def null(self):
        """Same design with the change pushed past the end of the sample."""
        return DGPSpec(self.kind, self.theta, self.theta, self.seed)


def _frame(y, x, z):
    return SeriesFrame(timestamps=np.arange(1, len(y) + 1), target=y,
                       covariates=np.column_stack([x, z]),
                       covariate_names=("x", "z"))


def gen_termination(spec: DGPSpec, noise=True) -> SeriesFrame:
    """Covariates stop driving the target after ``theta``.

    Pre-change ``Y_t = 0.5 ln X_{t-1} + 0.2 Z_{t-1}^2 + 0.3 nu_t``; after
    it ``Y_t ~ N(5, 36)``. ``X ~ Exp(3)``, ``Z ~ Gamma(3, 1)`` throughout.
    """
    g = rng(spec.seed)
    T, th = spec.T, spec.theta
    X = g.exponential(3.0, T + 1)
    Z = g.gamma(3.0, 1.0, T + 1)
    nu = g.standard_normal(th) if noise else np.zeros(th)
    xi = g.normal(5.0, 6.0, T - th)
    y = np.empty(T)
    y[:th] = 0.5 * np.log(X[:th]) + 0.2 * Z[:th] ** 2 + 0.3 * nu
    y[th:] = xi
    return _frame(y, X[1:], Z[1:])


def gen_inversion(spec: DGPSpec, noise=True) -> SeriesFrame:
    """Information flow reverses at ``theta``.

    Pre-change as in :func:`gen_termination` with exogenous covariates.
    Afterwards ``Y_t ~ N(5, 9)``, ``X_t = 0.3 Y_{t-1} + 0.1 psi_t`` and
    ``Z_t = 0.6 Y_{t-1}^2 + 0.1 zeta_t``.
    """
    g = rng(spec.seed)
    T, th = spec.T, spec.theta
    X = np.empty(T + 1)
    Z = np.empty(T + 1)
    X[:th + 1] = g.exponential(3.0, th + 1)
    Z[:th + 1] = g.gamma(3.0, 1.0, th + 1)
    nu = g.standard_normal(th) if noise else np.zeros(th)
    xi = g.normal(5.0, 3.0, T - th)
    psi = g.standard_normal(T - th) if noise else np.zeros(T - th)
    zeta = g.standard_normal(T - th) if noise else np.zeros(T - th)
    y = np.empty(T)
    y[:th] = 0.5 * np.log(X[:th]) + 0.2 * Z[:th] ** 2 + 0.3 * nu
    for t in range(th + 1, T + 1):  # period t is row t - 1
        y[t - 1] = xi[t - th - 1]
        X[t] = 0.3 * y[t - 2] + 0.1 * psi[t - th - 1]
        Z[t] = 0.6 * y[t - 2] ** 2 + 0.1 * zeta[t - th - 1]
    return _frame(y, X[1:], Z[1:])


def tail_lambda(x):
    """Min-max normalised distance to the median, in ``[0, 1]``."""
    d = np.asarray(x, dtype=float) - np.median(x)
    return (d - d.min()) / (d.max() - d.min())


def gen_tail_dependent(spec: DGPSpec, noise=True, latent=False):
    """Heavy-tailed marginals with tail-dependent pre-change co-movement.

    Pre-change ``Y_t = X_{t-1} + (1 - sqrt(lambda_{t-1})) xi_t`` with
    ``X ~ WeibullMin(1.5)``; post-change ``Y_t = 0.9 + xi_t``, ``xi ~ N(0,
    0.5)``. ``lambda`` uses the pre-change ``X_0..X_theta``. Post-change
    covariate values are fresh Weibull draws that no longer reach ``Y``.

    With ``latent=True`` also returns ``{"x_full": X_0..X_T, "lam": ...}``.
    """
    g = rng(spec.seed)
    T, th = spec.T, spec.theta
    X = g.weibull(1.5, T + 1)
    xi = g.normal(0.0, np.sqrt(0.5), T) if noise else np.zeros(T)
    lam = tail_lambda(X[:th + 1])
    y = np.empty(T)
    y[:th] = X[:th] + (1.0 - np.sqrt(lam[:th])) * xi[:th]
    y[th:] = 0.9 + xi[th:]
    frame = SeriesFrame(timestamps=np.arange(1, T + 1), target=y,
                        covariates=X[1:, None], covariate_names=("x",))
    if latent:
        return frame, {"x_full": X, "lam": lam}
    return frame


def gen_splice(seed, T=600, splice=300, rho=0.95, null=False) -> SeriesFrame:
    """Two Gaussian regimes joined at row ``splice``.

    Before the splice ``Y_t = rho X_{t-1} + sqrt(1 - rho^2) eps_t``; after
    it ``Y_t ~ N(0, 1)`` independent of ``X ~ N(0, 1)``, so only the
    dependence changes, not the marginal. ``null=True`` keeps the first
    regime throughout.
    """
    if not 0 < splice <= T:
        raise ConfigError("need 0 < splice <= T")
    g = rng(seed)
    x = g.standard_normal(T + 1)
    y = rho * x[:-1] + np.sqrt(1.0 - rho ** 2) * g.standard_normal(T)
    if not null:
        y[splice:] = g.standard_normal(T - splice)
    return SeriesFrame(timestamps=np.arange(1, T + 1), target=y,
                       covariates=x[1:, None], covariate_names=("x",))


GENERATORS = {
    "termination": gen_termination,
    "inversion": gen_inversion,
    "tail_dependent": gen_tail_dependent,
}


def generate(spec: DGPSpec) -> SeriesFrame:
    return GENERATORS[spec.kind](spec)


def summary_stats(y) -> dict:
    """Moments and lag-1 dependence; kurtosis is excess (normal -> 0).

    Skewness, kurtosis and correlations are ``None`` for a constant input.
    """
    y = np.asarray(y, dtype=float)
    if len(y) < 3:
        raise ValueError("need at least three observations")
    out = {"mean": float(np.mean(y)), "std": float(np.std(y))}
    if np.ptp(y) == 0:
        out.update(skewness=None, kurtosis=None, lag1_corr=None,
                   lag1_rank_corr=None)
        return out
    out["skewness"] = float(stats.skew(y))
    out["kurtosis"] = float(stats.kurtosis(y))
    a, b = y[1:], y[:-1]
    out["lag1_corr"] = float(np.corrcoef(a, b)[0, 1])
    out["lag1_rank_corr"] = float(stats.spearmanr(a, b)[0])
    return out


# -- replication harness -----------------------------------------------------

def worker_count(n_tasks):
    """Workers for fan-out: ``EWS_THREADS`` if set, else the CPU count."""
    env = os.environ.get("EWS_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


def fan_out(fn, items):
    """``[fn(x) for x in items]``, in parallel when more than one worker."""
    items = list(items)
    n = worker_count(len(items))
    if n == 1:
        return [fn(x) for x in items]
    from joblib import Parallel, delayed
    return Parallel(n_jobs=n)(delayed(fn)(x) for x in items)


def rep_seed(seed, rep):
    return derive_seed(seed, 0, rep)


def null_seed(seed, i):
    return derive_seed(seed, 1, i)


@dataclass
class ReplicationResult:
    """PFA, ADD and ND over seeded replications, plus per-rep records."""

    kind: str
    variant: str
    threshold: float | None
    n_reps: int
    pfa: float
    add: float | None
    nd: float
    records: list = field(default_factory=list)

    def to_json(self, path) -> Path:
        path = Path(path)
        payload = {k: v for k, v in asdict(self).items() if k != "records"}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path

    def to_csv(self, path) -> Path:
        path = Path(path)
        cols = ["rep", "seed", "first_alarm", "pfa_flag", "delay", "nd_flag",
                "error"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in self.records:
                w.writerow({c: "" if r.get(c) is None else r[c] for c in cols})
        return path


def aggregate(records, kind, variant, threshold) -> ReplicationResult:
    n = len(records)
    delays = [r["delay"] for r in records if r["delay"] is not None]
    return ReplicationResult(
        kind=kind, variant=variant, n_reps=n,
        threshold=None if isinstance(threshold, str) else float(threshold),
        pfa=sum(r["pfa_flag"] for r in records) / n if n else 0.0,
        add=float(np.mean(delays)) if delays else None,
        nd=sum(r["nd_flag"] for r in records) / n if n else 0.0,
        records=list(records))


def one_replication(spec: DGPSpec, config, detector: DetectorConfig,
                    threshold, rep, seed, alarm_fn=None):
    """Generate, detect and score one seeded run; failures count as ND.

    ``alarm_fn(frame, seed)`` replaces the entropy detector when given and
    must return alarm times as 0-based row indices.
    """
    from .detector import score_detection
    from .pipeline import detect

    s = rep_seed(seed, rep)
    record = {"rep": rep, "seed": s, "first_alarm": None, "pfa_flag": 0,
              "delay": None, "nd_flag": 1, "error": None}
    try:
        frame = generate(spec.with_seed(s))
        if alarm_fn is None:
            times = detect(frame, config, detector, seed=s,
                           threshold=threshold).alarm_times
        else:
            times = sorted(int(a) for a in alarm_fn(frame, s))
    except Exception as exc:  # recorded, never dropped
        log.warning("replication %d failed: %s", rep, exc)
        record["error"] = f"{type(exc).__name__}: {exc}"
        return record
    score = score_detection(times, spec.theta, horizon=spec.T - 1)
    record.update(first_alarm=times[0] if times else None,
                  pfa_flag=score.pfa_flag, delay=score.delay,
                  nd_flag=score.nd_flag)
    return record


def run_replications(spec: DGPSpec, config, detector: DetectorConfig,
                     n_reps, seed=0, threshold=None,
                     alarm_fn=None) -> ReplicationResult:
    """Seeded generate -> detect -> score loop over ``n_reps`` runs.

    Rep ``r`` uses seed ``derive_seed(seed, 0, r)`` for both the data and
    the forests, so results do not depend on the worker count. Pass
    ``alarm_fn`` to score some other detector on the same draws.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    A = detector.threshold if threshold is None else threshold
    records = fan_out(
        lambda r: one_replication(spec, config, detector, A, r, seed,
                                  alarm_fn),
        range(n_reps))
    variant = config.variant if alarm_fn is None else "external"
    return aggregate(records, spec.kind, variant, A)


def null_entropy_streams(spec: DGPSpec, config, n_mc, seed=0):
    """Entropy streams of the change-free version of ``spec``."""
    from .pipeline import entropy_stream

    def one(i):
        s = null_seed(seed, i)
        frame = generate(spec.null().with_seed(s))
        return entropy_stream(frame, config, seed=s).values

    return fan_out(one, range(n_mc))


def calibrate_for_dgp(spec: DGPSpec, config, detector: DetectorConfig,
                      target_pfa=0.1, n_mc=100, seed=0, streams=None):
    """Threshold calibrated on the null version of ``spec``.

    Returns ``(Calibration, streams)`` so callers can reuse the streams.
    """
    from .pipeline import calibrate_on_frames

    if streams is None:
        streams = null_entropy_streams(spec, config, n_mc, seed)
    cal = calibrate_on_frames(
        [None] * len(streams), config, detector, target_pfa,
        seeds=[null_seed(seed, i) for i in range(len(streams))],
        streams=streams)
    return replace(cal, seed=int(seed)), streams
