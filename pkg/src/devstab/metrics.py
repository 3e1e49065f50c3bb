"""Device metrics: initialization and gate fidelity, duty cycle, addressability."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy import optimize

from devstab.model import (
    CalibrationRecord,
    DevStabError,
    Duration,
    Edge,
    Location,
    LookupFailure,
    MetricKind,
    MetricSeries,
    RBDecayData,
    ReadoutMatrix,
    ValidationError,
    as_seconds,
    canonical_edge,
)

__all__ = [
    "AddressabilityResult",
    "RBFit",
    "RBFitError",
    "DegenerateFitError",
    "init_fidelity",
    "gate_fidelity",
    "rb_fit",
    "duty_cycle",
    "empirical_joint",
    "addressability",
    "nmi_from_probabilities",
    "addressability_series",
    "metric_series_from_calibration",
    "device_average_series",
]


def _unit_interval(x: float, name: str) -> float:
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise ValidationError(f"{name} = {x} outside [0, 1]")
    return x


def init_fidelity(readout_error: float) -> float:
    """Initialization fidelity ``1 - e_R`` from a readout error rate."""
    return 1.0 - _unit_interval(readout_error, "readout error")


def gate_fidelity(gate_error: float) -> float:
    """Gate fidelity ``1 - eps_G`` from an error per gate."""
    return 1.0 - _unit_interval(gate_error, "gate error")


# --------------------------------------------------------------------------
# Randomized benchmarking
# --------------------------------------------------------------------------


class RBFitError(DevStabError):
    """The survival-curve fit did not converge."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residual norm {residual:.3g})")


class DegenerateFitError(DevStabError):
    """The fitted decay parameter fell outside (0, 1]."""

    def __init__(self, message: str, decay: float):
        self.decay = decay
        super().__init__(message)


@dataclass(frozen=True)
class RBFit:
    decay: float
    amplitude: float
    offset: float
    error_per_clifford: float
    residual: float


def _rb_initial_guess(m: np.ndarray, y: np.ndarray):
    # log-linear fit of (y - floor); floor sits just under the smallest point
    spread = np.ptp(y)
    floor = y.min() - 0.05 * spread
    logy = np.log(y - floor)
    slope, intercept = np.polyfit(m, logy, 1)
    p0 = float(np.clip(np.exp(slope), 1e-6, 1.0 - 1e-9))
    return [float(np.exp(intercept)), p0, float(floor)]


def rb_fit(data: RBDecayData) -> RBFit:
    """Fit ``survival(m) = A * p**m + B`` and convert ``p`` to an error per Clifford.

    The error per Clifford is ``(d - 1) * (1 - p) / d`` with ``d`` the
    Hilbert-space dimension carried by ``data`` (4 for two qubits).

    Raises
    ------
    RBFitError
        If the least-squares solver does not converge.
    DegenerateFitError
        If the fitted decay lies outside (0, 1].
    """
    m, y = data.lengths, data.survival
    d = data.dimension
    if np.ptp(y) == 0.0:
        # flat curve: nothing decays
        return RBFit(1.0, 0.0, float(y[0]), 0.0, 0.0)

    def resid(theta):
        a, p, b = theta
        return a * np.power(p, m) + b - y

    def jac(theta):
        a, p, _ = theta
        pm = np.power(p, m)
        dp = a * m * np.power(p, m - 1)
        return np.column_stack([pm, dp, np.ones_like(m)])

    x0 = _rb_initial_guess(m, y)
    try:
        sol = optimize.least_squares(
            resid, x0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=10000
        )
    except (ValueError, FloatingPointError) as exc:
        raise RBFitError(f"fit failed: {exc}", float(np.linalg.norm(resid(x0)))) from None
    residual = float(np.linalg.norm(sol.fun))
    if not sol.success or not np.all(np.isfinite(sol.x)):
        raise RBFitError(f"fit did not converge: {sol.message}", residual)
    a, p, b = (float(v) for v in sol.x)
    if not 0.0 < p <= 1.0:
        raise DegenerateFitError(f"fitted decay p = {p} outside (0, 1]", p)
    return RBFit(p, a, b, (d - 1) * (1.0 - p) / d, residual)


# --------------------------------------------------------------------------
# Duty cycle
# --------------------------------------------------------------------------


def duty_cycle(
    t2_values: Sequence[Union[float, Duration]],
    gate_duration: Union[float, Duration],
    harmonic_mean: bool = False,
) -> float:
    """Ratio of effective coherence time to gate duration.

    Plain floats are taken as seconds. The per-register T2 values combine as
    ``1 / sum(1 / T2_k)``; pass ``harmonic_mean=True`` for the textbook
    harmonic mean ``k / sum(1 / T2_k)`` instead.

    >>> round(duty_cycle([77e-6, 82e-6], 370e-9), 1)
    107.3
    """
    t2 = np.array([as_seconds(v) for v in t2_values], dtype=float)
    tg = as_seconds(gate_duration)
    if t2.size == 0:
        raise ValidationError("duty_cycle needs at least one T2 value")
    if np.any(~np.isfinite(t2)) or np.any(t2 <= 0) or not tg > 0:
        raise ValidationError("durations must be strictly positive")
    inv = np.sum(1.0 / t2)
    t2_eff = (t2.size if harmonic_mean else 1.0) / inv
    return float(t2_eff / tg)


# --------------------------------------------------------------------------
# Addressability
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AddressabilityResult:
    pair: Edge
    entropy_a: float
    entropy_b: float
    joint_entropy: float
    mutual_information: float
    nmi: float
    addressability: float


def empirical_joint(m: ReadoutMatrix, pair: Sequence[int]) -> np.ndarray:
    """2x2 table of outcome counts; ``table[x, y]`` counts shots with bits (x, y).

    Rows index the first register of ``pair``, columns the second.
    """
    a, b = (int(r) for r in pair)
    x = m.column(a).astype(np.int64)
    y = m.column(b).astype(np.int64)
    return np.bincount(2 * x + y, minlength=4).reshape(2, 2)


def _entropy_bits(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def addressability(joint, pair: Optional[Sequence[int]] = (0, 1)) -> AddressabilityResult:
    """Mutual information, NMI and addressability ``1 - NMI`` of a 2x2 joint table.

    Entropies are in bits. When both marginals are deterministic the NMI
    is 0/0; it is defined as 0 (addressability 1).
    """
    table = np.asarray(joint, dtype=float)
    if table.shape != (2, 2):
        raise ValidationError(f"joint table must be 2x2, got shape {table.shape}")
    if np.any(table < 0):
        raise ValidationError("joint counts must be non-negative")
    total = table.sum()
    if not total > 0:
        raise ValidationError("joint table is all zeros")
    pxy = table / total
    hx = _entropy_bits(pxy.sum(axis=1))
    hy = _entropy_bits(pxy.sum(axis=0))
    hxy = _entropy_bits(pxy.ravel())
    mi = max(hx + hy - hxy, 0.0)
    h_avg = 0.5 * (hx + hy)
    eta = 0.0 if h_avg <= 0.0 else min(mi / h_avg, 1.0)
    e = tuple(int(v) for v in pair) if pair is not None else (0, 1)
    return AddressabilityResult(e, hx, hy, hxy, mi, eta, 1.0 - eta)


def nmi_from_probabilities(p00: float, p01: float, p10: float, p11: float) -> float:
    """Closed-form NMI of a two-bit distribution (``p_xy``, first bit = x)."""
    return addressability(np.array([[p00, p01], [p10, p11]], dtype=float)).nmi


_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def addressability_series(
    windows: Sequence[ReadoutMatrix],
    pair: Sequence[int],
    kind: MetricKind = MetricKind.ADDRESSABILITY,
) -> MetricSeries:
    """One addressability (or NMI) value per readout window, in window order.

    Windows are stamped with their ``window_start``; windows without
    timestamps are stamped with their ordinal position (seconds after the
    Unix epoch).
    """
    kind = MetricKind.parse(kind)
    if kind not in (MetricKind.ADDRESSABILITY, MetricKind.NMI):
        raise ValidationError(f"addressability_series cannot produce {kind.value}")
    if not windows:
        raise ValidationError("addressability_series needs at least one window")
    e = canonical_edge(*pair)
    points = []
    for k, w in enumerate(windows):
        res = addressability(empirical_joint(w, e), e)
        t = w.window_start if w.window_start is not None else _EPOCH + timedelta(seconds=k)
        points.append((t, res.addressability if kind == MetricKind.ADDRESSABILITY else res.nmi))
    return MetricSeries(kind, e, windows[0].device_id, tuple(points))


# --------------------------------------------------------------------------
# Calibration series
# --------------------------------------------------------------------------


def _record_value(rec: CalibrationRecord, kind: MetricKind, loc: Location) -> Optional[float]:
    if kind == MetricKind.INIT_FIDELITY:
        v = rec.readout_error.get(loc)
        return None if v is None else init_fidelity(v)
    if kind == MetricKind.T2:
        v = rec.t2.get(loc)
        return None if v is None else v.seconds
    if kind == MetricKind.GATE_FIDELITY:
        v = rec.cnot_error.get(loc)
        return None if v is None else gate_fidelity(v)
    if kind == MetricKind.GATE_DURATION:
        v = rec.cnot_length.get(loc) if rec.cnot_length else None
        return None if v is None else v.seconds
    if kind == MetricKind.DUTY_CYCLE:
        tg = rec.cnot_length.get(loc) if rec.cnot_length else None
        t2 = [rec.t2.get(q) for q in loc]
        if tg is None or any(v is None for v in t2):
            return None
        return duty_cycle(t2, tg)
    raise ValidationError(f"{kind.value} is not derived from calibration records")


def _location_known(records: Sequence[CalibrationRecord], kind: MetricKind, loc: Location) -> bool:
    for rec in records:
        if kind == MetricKind.INIT_FIDELITY:
            if loc in rec.readout_error:
                return True
        elif kind == MetricKind.T2:
            if loc in rec.t2:
                return True
        elif loc in rec.cnot_error or (rec.cnot_length and loc in rec.cnot_length):
            return True
    return False


def _normalize_location(kind: MetricKind, location) -> Location:
    if kind.per_edge:
        if isinstance(location, (int, np.integer)):
            raise ValidationError(f"{kind.value} needs an edge location, got register {location}")
        return canonical_edge(*location)
    if isinstance(location, tuple):
        raise ValidationError(f"{kind.value} needs a register location, got {location}")
    return int(location)


def metric_series_from_calibration(
    records: Sequence[CalibrationRecord],
    kind: Union[MetricKind, str],
    location,
    device_id: str = "",
) -> MetricSeries:
    """Extract one metric at one location from a sorted list of records.

    Records lacking the needed fields are skipped. Records that repeat an
    earlier ``last_update`` are skipped with a warning.
    """
    kind = MetricKind.parse(kind)
    if kind in (MetricKind.ADDRESSABILITY, MetricKind.NMI):
        raise ValidationError(f"{kind.value} comes from readout data, not calibration records")
    loc = _normalize_location(kind, location)
    if records and not _location_known(records, kind, loc):
        raise LookupFailure(f"location {location} not present in calibration records")
    points = []
    last = None
    for rec in records:
        if last is not None and rec.last_update < last:
            raise ValidationError("records must be sorted by last_update")
        v = _record_value(rec, kind, loc)
        if v is None:
            continue
        if last is not None and rec.last_update == last:
            warnings.warn(f"duplicate last_update {rec.last_update}; later record skipped", stacklevel=2)
            continue
        points.append((rec.last_update, v))
        last = rec.last_update
    return MetricSeries(kind, loc, device_id, tuple(points))


def device_average_series(
    records: Sequence[CalibrationRecord],
    kind: Union[MetricKind, str],
    locations: Iterable[Location],
    device_id: str = "",
) -> MetricSeries:
    """Per-record mean of a metric over ``locations`` (locations absent in a record are skipped).

    The series location is the first requested location; treat it as a
    device-level aggregate.
    """
    kind = MetricKind.parse(kind)
    locs = [_normalize_location(kind, loc) for loc in locations]
    if not locs:
        raise ValidationError("no locations to average")
    points = []
    for rec in records:
        vals = [v for v in (_record_value(rec, kind, loc) for loc in locs) if v is not None]
        if vals and (not points or points[-1][0] < rec.last_update):
            points.append((rec.last_update, float(np.mean(vals))))
    return MetricSeries(kind, locs[0], device_id, tuple(points))
