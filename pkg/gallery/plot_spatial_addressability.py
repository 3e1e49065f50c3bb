"""
Spatial stability and addressability
====================================

Pairwise distances between registers, and the addressability of register
pairs measured from segmented readout bitstreams.
"""

from datetime import datetime, timedelta, timezone

import numpy as np

from devstab import (
    DeviceTopology,
    DriftModel,
    MetricKind,
    PairCorrelationModel,
    ParameterDrift,
    addressability,
    addressability_series,
    empirical_joint,
    generate_calibration,
    generate_readout,
    metric_series_from_calibration,
    segment_shots,
    spatial_stability,
)

###############################################################################
# Five registers: 0 and 1 share a readout-error distribution, 4 sits far away.

topo = DeviceTopology("five", 5, frozenset())
bases = {0: 0.030, 1: 0.030, 2: 0.045, 3: 0.060, 4: 0.200}
model = DriftModel(readout_error={q: ParameterDrift(b, 0.002) for q, b in bases.items()}, seed=2)
start = datetime(2020, 1, 1, tzinfo=timezone.utc)
records = generate_calibration(model, topo, start, start + timedelta(days=1000), timedelta(hours=6))
series = {q: metric_series_from_calibration(records, MetricKind.INIT_FIDELITY, q) for q in bases}

dm = spatial_stability(series)
np.set_printoptions(precision=3, suppress=True)
print(dm.labels)
print(dm.values)

###############################################################################
# Addressability of a pair: one minus the normalized mutual information of
# the two registers' outcomes. Correlated outcomes drive it to 0.

table = np.array([[450, 50], [50, 450]])
r = addressability(table)
print("H(X,Y) %.4f  I %.4f  F_A %.4f" % (r.joint_entropy, r.mutual_information, r.addressability))

###############################################################################
# A readout stream with one Bell-correlated pair and one independent pair,
# cut into windows of 1000 shots.

readout = generate_readout(
    PairCorrelationModel({(0, 1): (0.5, 0, 0, 0.5), (2, 3): (0.25, 0.25, 0.25, 0.25)}, seed=5),
    8192,
    4,
)
windows = segment_shots(readout, 1000)
print(len(windows), "windows")
for pair in [(0, 1), (2, 3), (1, 2)]:
    s = addressability_series(windows, pair)
    print(pair, "mean F_A %.3f" % s.values.mean(), "joint", empirical_joint(readout, pair).ravel())
