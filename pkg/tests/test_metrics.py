import math
from datetime import timedelta

import numpy as np
import pytest
from hypothesis import given, strategies as st

from devstab.metrics import (
    DegenerateFitError,
    addressability,
    addressability_series,
    device_average_series,
    duty_cycle,
    empirical_joint,
    gate_fidelity,
    init_fidelity,
    metric_series_from_calibration,
    nmi_from_probabilities,
    rb_fit,
)
from devstab.model import (
    LookupFailure,
    MetricKind,
    RBDecayData,
    ReadoutMatrix,
    ValidationError,
)

LENGTHS = (1, 2, 5, 10, 20, 50, 100)


def shannon_bits(probs):
    """Brute-force Shannon entropy, 0 log 0 = 0."""
    return -math.fsum(p * math.log2(p) for p in probs if p > 0)


def brute_force_addressability(table):
    n = sum(sum(r) for r in table)
    pxy = [table[i][j] / n for i in range(2) for j in range(2)]
    px = [(table[i][0] + table[i][1]) / n for i in range(2)]
    py = [(table[0][j] + table[1][j]) / n for j in range(2)]
    hx, hy, hxy = shannon_bits(px), shannon_bits(py), shannon_bits(pxy)
    mi = hx + hy - hxy
    eta = 0.0 if hx + hy == 0 else mi / ((hx + hy) / 2)
    return hx, hy, hxy, mi, eta, 1 - eta


# -- fidelities --------------------------------------------------------------


@pytest.mark.parametrize("f", [init_fidelity, gate_fidelity])
@pytest.mark.parametrize("err, expected", [(0.0, 1.0), (1.0, 0.0), (0.05, 0.95), (0.015, 0.985)])
def test_fidelity_values(f, err, expected):
    assert f(err) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("f", [init_fidelity, gate_fidelity])
@pytest.mark.parametrize("bad", [-0.01, 1.01, float("nan")])
def test_fidelity_rejects_out_of_range(f, bad):
    with pytest.raises(ValidationError):
        f(bad)


@given(st.floats(min_value=0.0, max_value=1.0))
def test_fidelity_complement(x):
    assert init_fidelity(1.0 - x) == pytest.approx(x, abs=1e-15)
    assert gate_fidelity(1.0 - x) == pytest.approx(x, abs=1e-15)


# -- randomized benchmarking -------------------------------------------------


def rb_points(a, p, b, lengths=LENGTHS):
    return RBDecayData(tuple((m, a * p**m + b) for m in lengths))


def test_rb_noiseless_recovery():
    fit = rb_fit(rb_points(0.5, 0.98, 0.5))
    assert fit.decay == pytest.approx(0.98, abs=1e-9)
    assert fit.amplitude == pytest.approx(0.5, abs=1e-9)
    assert fit.offset == pytest.approx(0.5, abs=1e-9)
    assert fit.error_per_clifford == pytest.approx(0.015, abs=1e-9)


@pytest.mark.parametrize("a, p, b", [(0.7, 0.95, 0.25), (0.45, 0.995, 0.5), (0.3, 0.9, 0.3)])
def test_rb_noiseless_recovery_other_parameters(a, p, b):
    fit = rb_fit(rb_points(a, p, b, (1, 3, 8, 20, 50, 120, 300)))
    assert (fit.amplitude, fit.decay, fit.offset) == pytest.approx((a, p, b), abs=1e-9)


def test_rb_single_qubit_dimension():
    fit = rb_fit(RBDecayData(rb_points(0.5, 0.99, 0.5).points, dimension=2))
    assert fit.error_per_clifford == pytest.approx(0.005, abs=1e-9)


def test_rb_constant_survival():
    fit = rb_fit(RBDecayData(tuple((m, 1.0) for m in LENGTHS)))
    assert fit.decay == 1.0
    assert fit.error_per_clifford == 0.0


def test_rb_growing_curve_is_degenerate():
    data = RBDecayData(tuple((m, min(1.0, 0.3 + 0.2 * 1.01**m)) for m in LENGTHS))
    with pytest.raises(DegenerateFitError):
        rb_fit(data)


def test_rb_noisy_fit_is_unbiased_and_efficient():
    """Least squares on 1%-noise data: mean error near 0.015, spread near the Cramer-Rao bound."""
    m = np.array(LENGTHS, dtype=float)
    jac = np.column_stack([0.98**m, 0.5 * m * 0.98 ** (m - 1), np.ones_like(m)])
    crlb_sd_eps = 0.75 * 0.01 * math.sqrt(np.linalg.inv(jac.T @ jac)[1, 1])
    eps = []
    for seed in range(300):
        rng = np.random.default_rng(seed)
        y = np.clip(0.5 * 0.98**m + 0.5 + rng.normal(0, 0.01, m.size), 0, 1)
        eps.append(rb_fit(RBDecayData(tuple(zip(LENGTHS, y)))).error_per_clifford)
    eps = np.array(eps)
    assert abs(eps.mean() - 0.015) < 3 * eps.std() / math.sqrt(eps.size)
    assert eps.std() == pytest.approx(crlb_sd_eps, rel=0.2)


# -- duty cycle --------------------------------------------------------------


def test_duty_cycle_reported_values():
    assert duty_cycle([77e-6, 82e-6], 370e-9) == pytest.approx(107.326, abs=1e-3)
    assert duty_cycle([31e-6, 24e-6], 441e-9) == pytest.approx(30.674, abs=1e-3)


def test_duty_cycle_single_register():
    assert duty_cycle([100e-6], 100e-6) == 1.0


def test_duty_cycle_harmonic_mean_flag():
    # textbook harmonic mean of two values is twice the reduced combination
    assert duty_cycle([77e-6, 82e-6], 370e-9, harmonic_mean=True) == pytest.approx(
        2 * duty_cycle([77e-6, 82e-6], 370e-9)
    )


def test_duty_cycle_accepts_durations():
    from devstab.model import Duration

    assert duty_cycle([Duration(77, "us"), Duration(82, "us")], Duration(370, "ns")) == pytest.approx(
        duty_cycle([77e-6, 82e-6], 370e-9)
    )


@pytest.mark.parametrize("t2, tg", [([], 1.0), ([1.0, 0.0], 1.0), ([1.0], 0.0), ([-1.0], 1.0)])
def test_duty_cycle_validation(t2, tg):
    with pytest.raises(ValidationError):
        duty_cycle(t2, tg)


@given(
    st.lists(st.floats(1e-7, 1e-3), min_size=1, max_size=4),
    st.floats(1e-9, 1e-5),
    st.floats(1e-3, 1e3),
)
def test_duty_cycle_scale_invariance(t2, tg, k):
    assert duty_cycle([k * v for v in t2], k * tg) == pytest.approx(duty_cycle(t2, tg), rel=1e-12)


# -- addressability ----------------------------------------------------------


def matrix(rows):
    return ReadoutMatrix("d", np.array(rows), tuple(range(len(rows[0]))))


def test_empirical_joint_tables():
    assert empirical_joint(matrix([[0, 0]] * 4), (0, 1)).tolist() == [[4, 0], [0, 0]]
    alt = matrix([[0, 1], [1, 0]] * 3)
    assert empirical_joint(alt, (0, 1)).tolist() == [[0, 3], [3, 0]]
    every = matrix([[0, 0], [0, 1], [1, 0], [1, 1]])
    assert empirical_joint(every, (0, 1)).tolist() == [[1, 1], [1, 1]]


def test_empirical_joint_unknown_register():
    with pytest.raises(LookupFailure):
        empirical_joint(matrix([[0, 0]]), (0, 5))


def test_addressability_extremes():
    corr = addressability([[500, 0], [0, 500]])
    assert corr.nmi == pytest.approx(1.0, abs=1e-15) and corr.addressability == pytest.approx(0.0, abs=1e-15)
    ind = addressability([[250, 250], [250, 250]])
    assert ind.nmi == 0.0 and ind.addressability == 1.0


def test_addressability_derived_example():
    table = [[450, 50], [50, 450]]
    hx, hy, hxy, mi, eta, fa = brute_force_addressability(table)
    res = addressability(table)
    assert (res.entropy_a, res.entropy_b) == pytest.approx((1.0, 1.0), abs=1e-12)
    assert res.joint_entropy == pytest.approx(hxy, abs=1e-12)
    assert res.joint_entropy == pytest.approx(1.469, abs=1e-3)
    assert res.mutual_information == pytest.approx(0.531, abs=1e-3)
    assert res.nmi == pytest.approx(eta, abs=1e-12)
    assert res.addressability == pytest.approx(0.469, abs=1e-3)


def test_addressability_degenerate_registers():
    res = addressability([[1000, 0], [0, 0]])
    assert res.nmi == 0.0 and res.addressability == 1.0


def test_addressability_rejects_empty_table():
    with pytest.raises(ValidationError):
        addressability([[0, 0], [0, 0]])


tables = st.lists(st.integers(0, 10_000), min_size=4, max_size=4).filter(lambda c: sum(c) > 0)


@given(tables)
def test_addressability_invariants(c):
    table = [[c[0], c[1]], [c[2], c[3]]]
    r = addressability(table)
    assert r.mutual_information == pytest.approx(r.entropy_a + r.entropy_b - r.joint_entropy, abs=1e-12)
    assert -1e-12 <= r.mutual_information <= min(r.entropy_a, r.entropy_b) + 1e-12
    assert 0.0 <= r.nmi <= 1.0 and 0.0 <= r.addressability <= 1.0
    assert r.addressability == 1.0 - r.nmi
    t = addressability([[c[0], c[2]], [c[1], c[3]]])
    assert t.nmi == pytest.approx(r.nmi, abs=1e-12)
    assert r.nmi == pytest.approx(brute_force_addressability(table)[4], abs=1e-9)


def test_nmi_from_probabilities():
    assert nmi_from_probabilities(0.5, 0, 0, 0.5) == pytest.approx(1.0)
    assert nmi_from_probabilities(0.25, 0.25, 0.25, 0.25) == pytest.approx(0.0, abs=1e-15)


def test_addressability_series(t0):
    corr = ReadoutMatrix("d", np.array([[0, 0], [1, 1]] * 5), (0, 1), window_start=t0, window_end=t0 + timedelta(1))
    s = addressability_series([corr], (0, 1))
    assert s.values.tolist() == pytest.approx([0.0], abs=1e-15)
    later = ReadoutMatrix("d", corr.bits, (0, 1), window_start=t0 + timedelta(1), window_end=t0 + timedelta(2))
    twice = addressability_series([corr, later], (1, 0))
    assert twice.values[0] == twice.values[1]
    assert twice.location == (0, 1)
    nmi = addressability_series([corr], (0, 1), MetricKind.NMI)
    assert nmi.values[0] == pytest.approx(1.0)


def test_addressability_series_needs_windows():
    with pytest.raises(ValidationError):
        addressability_series([], (0, 1))


# -- calibration series ------------------------------------------------------


def test_series_from_calibration(yorktown_records):
    s = metric_series_from_calibration(yorktown_records, MetricKind.INIT_FIDELITY, 0, "yorktown")
    assert len(s) == len(yorktown_records)
    expected = [1 - r.readout_error[0] for r in yorktown_records]
    assert s.values.tolist() == pytest.approx(expected, abs=1e-15)


def test_duty_cycle_series_only_where_gate_length(yorktown_records):
    s = metric_series_from_calibration(yorktown_records, "duty_cycle", (1, 0))
    with_len = [r for r in yorktown_records if r.has_gate_length]
    assert len(s) == len(with_len) == 40
    r = with_len[0]
    assert s.values[0] == pytest.approx(duty_cycle([r.t2[0], r.t2[1]], r.cnot_length[(0, 1)]))


def test_gate_fidelity_series(yorktown_records):
    s = metric_series_from_calibration(yorktown_records, MetricKind.GATE_FIDELITY, (0, 1))
    assert s.values.tolist() == pytest.approx([1 - r.cnot_error[(0, 1)] for r in yorktown_records])


def test_series_from_empty_records():
    assert len(metric_series_from_calibration([], MetricKind.INIT_FIDELITY, 0)) == 0


def test_series_unknown_location(yorktown_records):
    with pytest.raises(LookupFailure):
        metric_series_from_calibration(yorktown_records, MetricKind.INIT_FIDELITY, 9)
    with pytest.raises(LookupFailure):
        metric_series_from_calibration(yorktown_records, MetricKind.GATE_FIDELITY, (0, 4))


def test_series_wrong_location_type(yorktown_records):
    with pytest.raises(ValidationError):
        metric_series_from_calibration(yorktown_records, MetricKind.GATE_FIDELITY, 0)


def test_device_average_series(yorktown_records, yorktown):
    s = device_average_series(yorktown_records, MetricKind.GATE_FIDELITY, yorktown.sorted_edges())
    r = yorktown_records[3]
    assert s.values[3] == pytest.approx(np.mean([1 - r.cnot_error[e] for e in yorktown.sorted_edges()]))
