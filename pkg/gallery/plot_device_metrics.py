"""
Device metrics from calibration records
=======================================

Fidelities, duty cycle and randomized-benchmarking error rates computed
from a synthetic five-register device.
"""

from datetime import datetime, timedelta, timezone

import numpy as np

from devstab import (
    DriftModel,
    MetricKind,
    RBDecayData,
    duty_cycle,
    generate_calibration,
    load_topology,
    metric_series_from_calibration,
    rb_fit,
)

###############################################################################
# A month of daily calibration records for the bundled five-register layout.

topo = load_topology("yorktown")
start = datetime(2019, 9, 1, tzinfo=timezone(timedelta(hours=-5)))
records = generate_calibration(DriftModel.uniform(topo, seed=1), topo, start, start + timedelta(days=30))
print(len(records), "records;", "edges:", topo.sorted_edges())

###############################################################################
# Initialization fidelity is one minus the readout error of a register.

f_init = metric_series_from_calibration(records, MetricKind.INIT_FIDELITY, 0, topo.device_id)
print("register 0 init fidelity: mean %.4f, std %.4f" % (f_init.values.mean(), f_init.values.std()))

###############################################################################
# Duty cycle compares the pair's combined coherence time to the CNOT length.
# The two hand-checked anchors:

print("duty cycle 77/82 us over 370 ns: %.1f" % duty_cycle([77e-6, 82e-6], 370e-9))
print("duty cycle 31/24 us over 441 ns: %.1f" % duty_cycle([31e-6, 24e-6], 441e-9))

tau = metric_series_from_calibration(records, MetricKind.DUTY_CYCLE, (0, 1))
print("edge 0-1 duty cycle: median %.1f" % np.median(tau.values))

###############################################################################
# Gate error from a randomized-benchmarking decay ``A p^m + B``.

lengths = np.array([1, 2, 5, 10, 20, 50, 100])
survival = 0.5 * 0.98**lengths + 0.5
fit = rb_fit(RBDecayData(tuple(zip(lengths.tolist(), survival))))
print("p = %.6f, error per Clifford = %.6f" % (fit.decay, fit.error_per_clifford))

# With 1% additive noise the estimate scatters by several percent.
rng = np.random.default_rng(0)
noisy = np.clip(survival + rng.normal(0, 0.01, lengths.size), 0, 1)
print("noisy fit error per Clifford = %.5f" % rb_fit(RBDecayData(tuple(zip(lengths.tolist(), noisy)))).error_per_clifford)
