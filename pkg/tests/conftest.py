from datetime import datetime, timedelta, timezone

import pytest

from devstab.model import DeviceTopology, load_topology
from devstab.synth import DriftModel, ParameterDrift, generate_calibration

EST = timezone(timedelta(hours=-5))


@pytest.fixture
def toronto():
    return load_topology("toronto")


@pytest.fixture
def yorktown():
    return load_topology("yorktown")


@pytest.fixture
def pair_topology():
    return DeviceTopology("pair", 2, frozenset({(0, 1)}))


@pytest.fixture
def t0():
    return datetime(2019, 3, 1, 6, 0, tzinfo=EST)


@pytest.fixture
def yorktown_records(yorktown, t0):
    """Sixty daily records; gate lengths appear from day 20 on."""
    model = DriftModel.uniform(yorktown, seed=11)
    gl_from = t0 + timedelta(days=20)
    model = model.replace("cnot_length", (0, 1), ParameterDrift(370.0, 5.0, available_from=gl_from))
    for e in yorktown.sorted_edges():
        if e != (0, 1):
            model = model.replace("cnot_length", e, ParameterDrift(400.0, 5.0, available_from=gl_from))
    return generate_calibration(model, yorktown, t0, t0 + timedelta(days=60))


# criterion number -> (passed, description); filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}")
