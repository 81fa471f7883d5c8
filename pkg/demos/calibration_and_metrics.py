"""
Calibrating the alarm threshold
===============================

A threshold is only meaningful next to its false-alarm rate. We estimate
the largest detection statistic on change-free runs, pick the smallest
threshold that at most 10% of them exceed, and then score a few
replications with it.
"""

import numpy as np

from ews import DetectorConfig, DGPSpec, PipelineConfig, WindowPlan
from ews.entropy import ForestParams
from ews.detector import null_maxima
from ews.simlab import calibrate_for_dgp, run_replications

# small forests and a short null sample keep this to a minute or so
config = PipelineConfig(plan=WindowPlan(delta=50),
                        forest=ForestParams(n_trees=50))
detector = DetectorConfig(m=6, alpha=0.5, beta=0.9, threshold="calibrate")
spec = DGPSpec("termination")

###############################################################################
# Null runs
# ---------
# The change-free version of the design stops at row 500, so every alarm
# on it is false.

cal, streams = calibrate_for_dgp(spec, config, detector, target_pfa=0.1,
                                 n_mc=10, seed=0)
print("threshold %.3g, false-alarm share on the null runs %.2f"
      % (cal.threshold, cal.achieved_pfa))
print("null stream lengths:", sorted({len(s) for s in streams}))

# Ten null runs pin the 10% point down only roughly; the detection
# statistic on null runs is heavy tailed (maxima span many decades), so
# expect the realised false-alarm share to wander with so few runs.
maxima = null_maxima(streams, detector, horizon=cal.horizon, burn_in=50)
print("log10 of the null maxima:", np.round(np.sort(np.log10(maxima)), 1))

###############################################################################
# Replications
# ------------
# Each replication draws fresh data and forests from its own derived seed.

result = run_replications(spec, config, detector, n_reps=4, seed=0,
                          threshold=cal.threshold)
for r in result.records:
    print("rep %(rep)d: first alarm %(first_alarm)s, delay %(delay)s" % r)
print("PFA %.2f  ND %.2f  ADD %s" % (result.pfa, result.nd,
                                     None if result.add is None
                                     else round(result.add, 1)))
