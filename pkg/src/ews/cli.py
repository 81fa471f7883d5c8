"""Command-line front end: ``ews {simulate,detect,calibrate,metrics}``.

Settings come from built-in defaults, then an optional flat ``key = value``
file given with ``--config``, then command-line flags. Exit codes: 0 on
success, 2 for a configuration or invariant violation, 3 for unreadable
input data.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .core import ConfigError, DetectorConfig, InputError, WindowPlan, \
    read_frame, write_frame
from .detector import CorruptStreamError, score_detection
from .entropy import ForestParams
from .pipeline import PipelineConfig, alarm_report, entropy_stream
from .simlab import DGPSpec, calibrate_for_dgp, generate, run_replications

log = logging.getLogger("ews")

DGP_NAMES = {"termination": "termination", "inversion": "inversion",
             "tail": "tail_dependent", "tail_dependent": "tail_dependent"}
VARIANT_NAMES = {"baseline": "baseline", "llf": "llf", "rank": "rank",
                 "llf-rank": "llf_rank", "llf_rank": "llf_rank"}

# simulation settings follow the synthetic study; detect follows the
# empirical one (longer windows, many shifts, slow smoothing)
DEFAULTS = {
    "common": {
        "variant": "baseline", "delta": 50, "step": 1, "m": 6, "alpha": 0.5,
        "beta": 0.9, "threshold": "calibrate", "seed": 0, "reps": 100,
        "dgp": "termination", "returns": False, "restart_after_alarm": True,
        "max_ar_order": 10, "max_cov_lag": 10, "n_trees": 200,
        "min_leaf": 5, "target_pfa": 0.1, "n_mc": 50, "T": 1000,
        "theta": 500, "horizon": None, "input": None, "output_dir": ".",
    },
    "detect": {"delta": 100, "m": 100, "alpha": 0.95, "beta": 0.95},
}

INT_KEYS = {"delta", "step", "m", "seed", "reps", "max_ar_order",
            "max_cov_lag", "n_trees", "min_leaf", "n_mc", "T", "theta",
            "horizon"}
FLOAT_KEYS = {"alpha", "beta", "target_pfa"}
BOOL_KEYS = {"returns", "restart_after_alarm"}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def parse_bool(text):
    value = str(text).strip().lower()
    if value in ("true", "1", "yes", "on"):
        return True
    if value in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def coerce(key, value):
    """Convert a raw setting to its type; raises :class:`ConfigError`."""
    if value is None:
        return None
    try:
        if key in INT_KEYS:
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if key in BOOL_KEYS:
        return value if isinstance(value, bool) else parse_bool(value)
    if key == "threshold":
        if str(value).strip().lower() == "calibrate":
            return "calibrate"
        try:
            return float(value)
        except ValueError:
            raise ConfigError("threshold must be a number or 'calibrate'")
    if key == "variant":
        if value not in VARIANT_NAMES:
            raise ConfigError(f"unknown variant {value!r}")
        return VARIANT_NAMES[value]
    if key == "dgp":
        if value not in DGP_NAMES:
            raise ConfigError(f"unknown dgp {value!r}")
        return DGP_NAMES[value]
    return value


def read_config_file(path):
    """Flat ``key = value`` lines; ``#`` starts a comment, dashes allowed."""
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}")
    for n, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {n}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS["common"]:
            raise ConfigError(f"config line {n}: unknown key {key!r}")
        out[key] = value
    return out


def build_parser():
    p = argparse.ArgumentParser(
        prog="ews",
        description="Entropy-based early warning: weighted Shiryaev-Roberts "
                    "monitoring of windowed conditional entropy.")
    sub = p.add_subparsers(dest="mode", required=True)
    help_text = {
        "simulate": "generate a synthetic design and run the detector",
        "detect": "run the detector on a CSV of observations",
        "calibrate": "Monte Carlo threshold for a target false-alarm rate",
        "metrics": "PFA, ADD and ND over seeded replications",
    }
    for mode, text in help_text.items():
        s = sub.add_parser(mode, help=text)
        s.add_argument("--config", help="flat key = value settings file")
        s.add_argument("--input", help="CSV: timestamp, target, covariates")
        s.add_argument("--output-dir", dest="output_dir")
        s.add_argument("--variant", choices=sorted(VARIANT_NAMES))
        s.add_argument("--delta", help="window length")
        s.add_argument("--step", help="window step")
        s.add_argument("--m", help="number of mean shifts")
        s.add_argument("--alpha", help="smoothing weight of the mean")
        s.add_argument("--beta", help="smoothing weight of the variance")
        s.add_argument("--threshold", help="alarm level or 'calibrate'")
        s.add_argument("--seed")
        s.add_argument("--reps", help="replications for metrics")
        s.add_argument("--dgp", choices=["termination", "inversion", "tail"])
        s.add_argument("--returns", action="store_const", const=True,
                       default=None, help="apply the log-return transform")
        s.add_argument("--restart-after-alarm", dest="restart_after_alarm",
                       choices=["true", "false"])
        s.add_argument("--target-pfa", dest="target_pfa")
        s.add_argument("--n-mc", dest="n_mc",
                       help="null runs used for calibration")
        s.add_argument("--horizon", help="windows checked during calibration")
        s.add_argument("--max-ar-order", dest="max_ar_order")
        s.add_argument("--max-cov-lag", dest="max_cov_lag")
        s.add_argument("--n-trees", dest="n_trees")
        s.add_argument("--min-leaf", dest="min_leaf")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve(args):
    """Merge defaults, config file and flags into one typed settings dict."""
    settings = dict(DEFAULTS["common"])
    settings.update(DEFAULTS.get(args.mode, {}))
    if args.config:
        settings.update(read_config_file(args.config))
    for key in DEFAULTS["common"]:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return {k: coerce(k, v) for k, v in settings.items()}


def pipeline_config(s):
    plan = WindowPlan(delta=s["delta"], step=s["step"],
                      max_ar_order=s["max_ar_order"],
                      max_cov_lag=s["max_cov_lag"])
    return PipelineConfig(plan=plan, variant=s["variant"],
                          forest=ForestParams(n_trees=s["n_trees"],
                                              min_leaf=s["min_leaf"]))


def detector_config(s):
    return DetectorConfig(m=s["m"], alpha=s["alpha"], beta=s["beta"],
                          threshold=s["threshold"],
                          restart_after_alarm=s["restart_after_alarm"])


def dgp_spec(s, T=None, theta=None):
    return DGPSpec(kind=s["dgp"], T=s["T"] if T is None else T,
                   theta=s["theta"] if theta is None else theta,
                   seed=s["seed"])


def write_json(path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def threshold_for(s, pipe, det, spec):
    """Numeric threshold, calibrating on the null of ``spec`` if asked."""
    if s["threshold"] != "calibrate":
        return s["threshold"], None
    cal, _ = calibrate_for_dgp(spec, pipe, det, target_pfa=s["target_pfa"],
                               n_mc=s["n_mc"], seed=s["seed"])
    return cal.threshold, cal


def settings_echo(s):
    return {k: v for k, v in sorted(s.items())
            if k not in ("output_dir", "input")}


def cmd_simulate(s, out):
    pipe, det = pipeline_config(s), detector_config(s)
    spec = dgp_spec(s)
    frame = generate(spec)
    A, cal = threshold_for(s, pipe, det, spec)
    entropy = entropy_stream(frame, pipe, seed=s["seed"])
    report = alarm_report(frame, entropy, det, threshold=A,
                          burn_in=pipe.plan.delta)
    score = score_detection(report.alarm_times, spec.theta)
    write_frame(frame, out / "series.csv")
    entropy.to_csv(out / "entropy.csv")
    report.sr_to_csv(out / "sr.csv", entropy.window_index)
    extra = {"theta": spec.theta, "pfa_flag": score.pfa_flag,
             "delay": score.delay, "nd_flag": score.nd_flag,
             "settings": settings_echo(s)}
    if cal is not None:
        extra["calibration"] = cal.__dict__
    report.to_json(out / "report.json", extra)
    return report


def cmd_detect(s, out):
    if not s["input"]:
        raise ConfigError("detect needs --input")
    if not Path(s["input"]).exists():
        raise ConfigError(f"input file not found: {s['input']}")
    frame = read_frame(s["input"], returns=s["returns"])
    pipe, det = pipeline_config(s), detector_config(s)
    entropy = entropy_stream(frame, pipe, seed=s["seed"])
    if len(entropy) < 2:
        raise ConfigError("series too short for two windows")
    for (t0, t1), meta in zip(entropy.window_index, entropy.info):
        log.info("window [%d, %d] k=%d l=%d", t0, t1, meta["k"], meta["l"])
    # a calibrated threshold comes from the change-free version of the
    # chosen synthetic design, at the input's length
    A, cal = threshold_for(s, pipe, det,
                           dgp_spec(s, T=len(frame), theta=len(frame)))
    report = alarm_report(frame, entropy, det, threshold=A,
                          burn_in=pipe.plan.delta)
    entropy.to_csv(out / "entropy.csv")
    report.sr_to_csv(out / "sr.csv", entropy.window_index)
    extra = {"settings": settings_echo(s)}
    if cal is not None:
        extra["calibration"] = cal.__dict__
    report.to_json(out / "report.json", extra)
    return report


def cmd_calibrate(s, out):
    pipe, det = pipeline_config(s), detector_config(s)
    spec = dgp_spec(s)
    horizon = s["horizon"]
    T = spec.theta if horizon is None else horizon + pipe.plan.delta
    cal, _ = calibrate_for_dgp(DGPSpec(spec.kind, T, T, spec.seed), pipe, det,
                               target_pfa=s["target_pfa"], n_mc=s["n_mc"],
                               seed=s["seed"])
    if not cal.attained:
        log.warning("target PFA not attained; wrote the grid maximum")
    payload = dict(cal.__dict__, unattained=not cal.attained,
                   settings=settings_echo(s))
    write_json(out / "threshold.json", payload)
    return cal


def cmd_metrics(s, out):
    pipe, det = pipeline_config(s), detector_config(s)
    spec = dgp_spec(s)
    A, cal = threshold_for(s, pipe, det, spec)
    result = run_replications(spec, pipe, det, s["reps"], seed=s["seed"],
                              threshold=A)
    result.to_csv(out / "reps.csv")
    payload = {k: v for k, v in result.__dict__.items() if k != "records"}
    payload["settings"] = settings_echo(s)
    if cal is not None:
        payload["calibration"] = cal.__dict__
    write_json(out / "metrics.json", payload)
    return result


COMMANDS = {"simulate": cmd_simulate, "detect": cmd_detect,
            "calibrate": cmd_calibrate, "metrics": cmd_metrics}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        s = resolve(args)
        if s["target_pfa"] is not None and not 0 < s["target_pfa"] <= 1:
            raise ConfigError("target_pfa must lie in (0, 1]")
        out = Path(s["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.mode](s, out)
    except InputError as exc:
        where = f" (line {exc.row})" if exc.row else ""
        print(f"ews: input error{where}: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, CorruptStreamError, ValueError) as exc:
        print(f"ews: configuration error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
