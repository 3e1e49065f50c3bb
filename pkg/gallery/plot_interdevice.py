"""
Comparing devices
=================

Inter-device distances between device-averaged gate fidelity, written
and read back through the command-line front end.
"""

import json
import tempfile
from pathlib import Path

from devstab.cli import main
from devstab.ingest import parse_distance_matrix

###############################################################################
# Five synthetic devices on the same layout, each with a different mean gate
# error.

work = Path(tempfile.mkdtemp())
names = ["alpha", "beta", "gamma", "delta", "epsilon"]
for k, name in enumerate(names):
    model = {
        "kind": "calibration",
        "topology": "yorktown",
        "start": "2020-01-01 00:00:00+00:00",
        "end": "2020-07-01 00:00:00+00:00",
        "seed": k,
        "defaults": {
            "cnot_error": {"base": 0.010 + 0.0008 * k, "jitter": 0.003},
            "readout_error": {"base": 0.03, "jitter": 0.002},
        },
    }
    (work / f"{name}.json").write_text(json.dumps(model))
    main(["synth", "--input", str(work / f"{name}.json"), "--out", str(work / name)])

###############################################################################
# ``interdevice`` averages gate fidelity over every edge unless one
# ``--location`` is given.

argv = ["interdevice", "--metric", "gate_fidelity", "--out", str(work / "cmp")]
for name in names:
    argv += ["--input", f"{name}={work / name / 'calibration.csv'}"]
main(argv)

dm = parse_distance_matrix(work / "cmp" / "interdevice.csv")
for label, row in zip(dm.labels, dm.values):
    print("%-8s" % label, " ".join("%.2f" % v for v in row))
