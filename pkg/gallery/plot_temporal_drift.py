"""
Temporal stability across a step change
=======================================

A gate-error series with a step at day 300, compared window by window
against the preceding window.
"""

from datetime import datetime, timedelta, timezone

from devstab import (
    DeviceTopology,
    DriftModel,
    MetricKind,
    ParameterDrift,
    generate_calibration,
    metric_series_from_calibration,
    temporal_stability,
)

###############################################################################
# Daily gate error 0.015 with jitter 0.001, stepping up by five jitter widths.

topo = DeviceTopology("step", 2, frozenset({(0, 1)}))
start = datetime(2020, 1, 1, tzinfo=timezone.utc)
step = start + timedelta(days=300)
model = DriftModel(cnot_error={(0, 1): ParameterDrift(0.015, 0.001, steps=((step, 0.020),))}, seed=4)
records = generate_calibration(model, topo, start, start + timedelta(days=600))
series = metric_series_from_calibration(records, MetricKind.GATE_FIDELITY, (0, 1))

###############################################################################
# 90-day histograms evaluated every 30 days. The reference window ends where
# the current one begins, so a clean step gives a distance near 1.

res = temporal_stability(series, timedelta(days=90), timedelta(days=30))
for t, d in zip(res.times, res.distances):
    print("%s  %s" % (t.date(), "#" * int(round(40 * d))))
print("median %.3f, max %.3f" % (res.median, res.max))

###############################################################################
# With overlapping windows (offset equal to the 30-day lag) the two
# histograms share 60 days of data, which caps the response.

overlap = temporal_stability(series, timedelta(days=90), timedelta(days=30), allow_overlap=True)
print("overlapping windows: max %.3f" % overlap.max)

###############################################################################
# A fixed origin compares every window with the first 90 days instead.

origin = temporal_stability(series, timedelta(days=90), reference=start, stride=timedelta(days=30))
print("fixed origin: first %.3f, last %.3f" % (origin.distances[0], origin.distances[-1]))
