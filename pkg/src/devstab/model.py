"""Core value types shared across the package.

Everything here is a frozen dataclass. Containers held by the records are
plain dicts and arrays; treat them as read-only after construction.
"""
from __future__ import annotations

import enum
import itertools
import json
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

Edge = Tuple[int, int]
Location = Union[int, Edge]


class DevStabError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(DevStabError, ValueError):
    """An input violates a documented precondition or invariant."""


class ParseError(DevStabError, ValueError):
    """A file could not be parsed.

    ``row`` and ``column`` locate the offending cell when known. Rows are
    0-based data-row indices (header excluded).
    """

    def __init__(self, message: str, row: Optional[int] = None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class LookupFailure(DevStabError, KeyError):
    """A register, edge or location is not present in the data."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


def canonical_edge(i: int, j: int) -> Edge:
    """Return the unordered pair ``(i, j)`` as ``(min, max)``."""
    i, j = int(i), int(j)
    if i == j:
        raise ValidationError(f"self-loop edge ({i}, {j})")
    return (i, j) if i < j else (j, i)


def location_label(loc: Location) -> str:
    """String label used in file names and matrix headers: ``"3"`` or ``"0-1"``."""
    if isinstance(loc, tuple):
        return f"{loc[0]}-{loc[1]}"
    return str(int(loc))


def parse_location(label: Union[str, int, Sequence[int]]) -> Location:
    """Inverse of :func:`location_label`; also accepts ``"(0,1)"`` and ``"0,1"``."""
    if isinstance(label, (int, np.integer)):
        return int(label)
    if isinstance(label, (tuple, list)):
        return canonical_edge(*label)
    parts = [p for p in re.split(r"[-,_()\s]+", str(label).strip()) if p]
    if parts and parts[0].lower().startswith("q"):
        parts[0] = parts[0][1:]
    try:
        nums = [int(p) for p in parts]
    except ValueError:
        raise ValidationError(f"cannot parse location {label!r}") from None
    if len(nums) == 1:
        return nums[0]
    if len(nums) == 2:
        return canonical_edge(*nums)
    raise ValidationError(f"cannot parse location {label!r}")


# --------------------------------------------------------------------------
# Durations
# --------------------------------------------------------------------------

UNIT_SECONDS = {
    "s": 1.0,
    "ms": 1e-3,
    "us": 1e-6,
    "µs": 1e-6,
    "ns": 1e-9,
    "ps": 1e-12,
}


@dataclass(frozen=True)
class Duration:
    """A duration as recorded (``value`` in ``unit``); use ``seconds`` for arithmetic.

    Keeping the raw value avoids float drift when records are written back
    in their original unit.
    """

    value: float
    unit: str = "s"

    def __post_init__(self):
        if self.unit not in UNIT_SECONDS:
            raise ValidationError(f"unknown duration unit {self.unit!r}")
        if not (math.isfinite(self.value) and self.value > 0):
            raise ValidationError(f"duration must be strictly positive, got {self.value!r}")

    @property
    def seconds(self) -> float:
        return self.value * UNIT_SECONDS[self.unit]


def as_seconds(d: Union[Duration, float]) -> float:
    return d.seconds if isinstance(d, Duration) else float(d)


# --------------------------------------------------------------------------
# Topology
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DeviceTopology:
    """Register count and two-qubit connectivity of a device."""

    device_id: str
    capacity: int
    edges: frozenset = frozenset()

    def __post_init__(self):
        if int(self.capacity) < 1:
            raise ValidationError(f"capacity must be positive, got {self.capacity}")
        object.__setattr__(self, "capacity", int(self.capacity))
        canon = []
        for e in self.edges:
            a, b = (int(x) for x in e)
            if a == b:
                raise ValidationError(f"self-loop edge ({a}, {b})")
            if not (0 <= a < self.capacity and 0 <= b < self.capacity):
                raise ValidationError(
                    f"edge ({a}, {b}) outside register range [0, {self.capacity})"
                )
            canon.append(canonical_edge(a, b))
        if len(set(canon)) != len(canon):
            raise ValidationError("duplicate edges in topology")
        object.__setattr__(self, "edges", frozenset(canon))

    @property
    def registers(self) -> range:
        return range(self.capacity)

    def has_edge(self, i: int, j: int) -> bool:
        return i != j and canonical_edge(i, j) in self.edges

    def sorted_edges(self) -> List[Edge]:
        return sorted(self.edges)

    def to_dict(self) -> dict:
        return {
            "device_id": self.device_id,
            "capacity": self.capacity,
            "edges": [list(e) for e in self.sorted_edges()],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DeviceTopology":
        try:
            edges = data.get("edges", [])
            # directed duplicates (e.g. [0,1] and [1,0]) collapse to one edge
            canon = {canonical_edge(*e) for e in edges}
            return cls(str(data["device_id"]), int(data["capacity"]), frozenset(canon))
        except KeyError as exc:
            raise ValidationError(f"topology missing field {exc}") from None


def load_topology(path_or_name: Union[str, Path]) -> DeviceTopology:
    """Load a topology JSON file, or a bundled one by name (``"toronto"``, ``"yorktown"``)."""
    p = Path(path_or_name)
    if p.exists():
        text = p.read_text()
    else:
        try:
            text = resources.files("devstab.data").joinpath(f"{path_or_name}.json").read_text()
        except FileNotFoundError:
            raise FileNotFoundError(f"topology file not found: {path_or_name}") from None
    return DeviceTopology.from_dict(json.loads(text))


def nearest_neighbor_pairs(topology: DeviceTopology) -> set:
    """Register pairs joined by a two-qubit coupler (the Bell-state candidates)."""
    return set(topology.edges)


def all_register_pairs(n: int) -> set:
    """All ``n choose 2`` unordered register pairs."""
    if int(n) < 2:
        raise ValidationError(f"invalid capacity {n}: need at least 2 registers")
    return set(itertools.combinations(range(int(n)), 2))


# --------------------------------------------------------------------------
# Calibration data
# --------------------------------------------------------------------------


def _check_aware(ts: datetime, what: str) -> None:
    if not isinstance(ts, datetime) or ts.tzinfo is None or ts.utcoffset() is None:
        raise ValidationError(f"{what} must be a timezone-aware datetime, got {ts!r}")


@dataclass(frozen=True)
class CalibrationRecord:
    """One snapshot of device calibration data.

    Per-register maps are keyed by register index, per-edge maps by canonical
    edge ``(min, max)``. ``cnot_direction`` keeps the control/target order of
    the source column (``cx10`` -> ``(1, 0)``) as metadata only.
    ``cnot_length`` is ``None`` when the snapshot carries no gate-length data.
    """

    last_update: datetime
    readout_error: Dict[int, float] = field(default_factory=dict)
    readout_cal_time: Dict[int, datetime] = field(default_factory=dict)
    cnot_error: Dict[Edge, float] = field(default_factory=dict)
    cnot_cal_time: Dict[Edge, datetime] = field(default_factory=dict)
    t2: Dict[int, Duration] = field(default_factory=dict)
    t2_cal_time: Dict[int, datetime] = field(default_factory=dict)
    cnot_length: Optional[Dict[Edge, Duration]] = None
    cnot_length_cal_time: Optional[Dict[Edge, datetime]] = None
    cnot_direction: Dict[Edge, Edge] = field(default_factory=dict)

    def __post_init__(self):
        _check_aware(self.last_update, "last_update")
        for name, errs in (("readout_error", self.readout_error), ("cnot_error", self.cnot_error)):
            for key, v in errs.items():
                if not (0.0 <= v <= 1.0):
                    raise ValidationError(f"{name}[{key}] = {v} outside [0, 1]")
        for e in self.cnot_error:
            if e != canonical_edge(*e):
                raise ValidationError(f"edge key {e} is not canonical")
        if self.cnot_length is not None:
            for e in self.cnot_length:
                if e != canonical_edge(*e):
                    raise ValidationError(f"edge key {e} is not canonical")
            extra = set(self.cnot_length) - set(self.cnot_error)
            if extra and self.cnot_error:
                raise ValidationError(f"cnot_length edges {sorted(extra)} have no cnot_error")

    @property
    def has_gate_length(self) -> bool:
        return bool(self.cnot_length)


# --------------------------------------------------------------------------
# Readout data
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PreparedState:
    """State prepared before readout: all zeros, or a Bell pair on one edge."""

    kind: str = "AllZeros"
    edge: Optional[Edge] = None

    def __post_init__(self):
        if self.kind not in ("AllZeros", "BellPair"):
            raise ValidationError(f"unknown prepared state {self.kind!r}")
        if self.kind == "BellPair":
            if self.edge is None:
                raise ValidationError("BellPair requires an edge")
            object.__setattr__(self, "edge", canonical_edge(*self.edge))
        elif self.edge is not None:
            raise ValidationError("AllZeros takes no edge")

    @classmethod
    def bell(cls, i: int, j: int) -> "PreparedState":
        return cls("BellPair", (i, j))

    def __str__(self):
        if self.kind == "BellPair":
            return f"BellPair({self.edge[0]},{self.edge[1]})"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "PreparedState":
        text = text.strip()
        if text == "AllZeros":
            return cls()
        m = re.fullmatch(r"BellPair\(\s*(\d+)\s*,\s*(\d+)\s*\)", text)
        if m:
            return cls.bell(int(m.group(1)), int(m.group(2)))
        raise ValidationError(f"unknown prepared state {text!r}")


ALL_ZEROS = PreparedState()


@dataclass(frozen=True, eq=False)
class ReadoutMatrix:
    """Shots x registers matrix of measured bits.

    ``bits`` is stored as a read-only ``uint8`` array.
    """

    device_id: str
    bits: np.ndarray
    register_labels: Tuple[int, ...]
    prepared_state: PreparedState = ALL_ZEROS
    window_start: Optional[datetime] = None
    window_end: Optional[datetime] = None
    metadata: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ValidationError(f"bits must be 2-D, got shape {bits.shape}")
        if bits.shape[0] < 1:
            raise ValidationError("readout matrix needs at least one shot")
        labels = tuple(int(r) for r in self.register_labels)
        if bits.shape[1] != len(labels):
            raise ValidationError(
                f"{bits.shape[1]} columns but {len(labels)} register labels"
            )
        if len(set(labels)) != len(labels):
            raise ValidationError("duplicate register labels")
        if bits.size and not np.isin(bits, (0, 1)).all():
            bad = np.argwhere(~np.isin(bits, (0, 1)))[0]
            raise ValidationError(f"non-binary entry at row {bad[0]}, column {bad[1]}")
        bits = bits.astype(np.uint8, copy=True)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "register_labels", labels)
        for name in ("window_start", "window_end"):
            ts = getattr(self, name)
            if ts is not None:
                _check_aware(ts, name)

    @property
    def shots(self) -> int:
        return self.bits.shape[0]

    def column(self, register: int) -> np.ndarray:
        try:
            idx = self.register_labels.index(int(register))
        except ValueError:
            raise LookupFailure(f"register {register} not in readout matrix") from None
        return self.bits[:, idx]

    def __eq__(self, other):
        if not isinstance(other, ReadoutMatrix):
            return NotImplemented
        return (
            self.device_id == other.device_id
            and self.register_labels == other.register_labels
            and self.prepared_state == other.prepared_state
            and self.window_start == other.window_start
            and self.window_end == other.window_end
            and np.array_equal(self.bits, other.bits)
        )


# --------------------------------------------------------------------------
# Series, histograms and matrices
# --------------------------------------------------------------------------


class MetricKind(str, enum.Enum):
    INIT_FIDELITY = "init_fidelity"
    GATE_FIDELITY = "gate_fidelity"
    DUTY_CYCLE = "duty_cycle"
    ADDRESSABILITY = "addressability"
    NMI = "nmi"
    T2 = "t2"
    GATE_DURATION = "gate_duration"

    @property
    def is_fidelity(self) -> bool:
        return self in (
            MetricKind.INIT_FIDELITY,
            MetricKind.GATE_FIDELITY,
            MetricKind.ADDRESSABILITY,
        )

    @property
    def per_edge(self) -> bool:
        """True when the metric lives on a register pair rather than a register."""
        return self not in (MetricKind.INIT_FIDELITY, MetricKind.T2)

    @classmethod
    def parse(cls, text: Union[str, "MetricKind"]) -> "MetricKind":
        if isinstance(text, MetricKind):
            return text
        key = re.sub(r"[^a-z0-9]", "", str(text).lower())
        for kind in cls:
            if key in (kind.value.replace("_", ""), kind.name.replace("_", "").lower()):
                return kind
        raise ValidationError(f"unknown metric kind {text!r}")


@dataclass(frozen=True)
class MetricSeries:
    """Timestamped values of one metric at one location of one device."""

    kind: MetricKind
    location: Location
    device_id: str
    points: Tuple[Tuple[datetime, float], ...] = ()

    def __post_init__(self):
        pts = tuple((t, float(v)) for t, v in self.points)
        for k, (t, v) in enumerate(pts):
            _check_aware(t, "series timestamp")
            if k and not pts[k - 1][0] < t:
                raise ValidationError("series timestamps must be strictly increasing")
            if self.kind.is_fidelity and not (0.0 <= v <= 1.0):
                raise ValidationError(f"{self.kind.value} value {v} outside [0, 1]")
            if self.kind == MetricKind.DUTY_CYCLE and v < 0:
                raise ValidationError(f"duty cycle value {v} is negative")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    @property
    def times(self) -> List[datetime]:
        return [t for t, _ in self.points]

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.points], dtype=float)


@dataclass(frozen=True, eq=False)
class Histogram:
    """Counts over explicit bin edges (``len(edges) == len(counts) + 1``)."""

    bin_edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        counts = np.asarray(self.counts)
        if edges.ndim != 1 or edges.size < 2:
            raise ValidationError("need at least two bin edges")
        if not np.all(np.diff(edges) > 0):
            raise ValidationError("bin edges must be strictly increasing")
        if counts.shape != (edges.size - 1,):
            raise ValidationError(
                f"{counts.size} counts for {edges.size - 1} bins"
            )
        if np.any(counts < 0) or not np.all(np.equal(np.mod(counts, 1), 0)):
            raise ValidationError("counts must be non-negative integers")
        counts = counts.astype(np.int64)
        edges.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def probabilities(self) -> np.ndarray:
        total = self.total
        if total == 0:
            raise ValidationError("empty histogram has no probabilities")
        return self.counts / total

    def __eq__(self, other):
        if not isinstance(other, Histogram):
            return NotImplemented
        return np.array_equal(self.bin_edges, other.bin_edges) and np.array_equal(
            self.counts, other.counts
        )


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Labeled symmetric matrix of pairwise distances in [0, 1]."""

    labels: Tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        labels = tuple(str(lab) for lab in self.labels)
        n = len(labels)
        if vals.shape != (n, n):
            raise ValidationError(f"matrix shape {vals.shape} does not match {n} labels")
        if not np.array_equal(vals, vals.T):
            raise ValidationError("distance matrix must be symmetric")
        if np.any(np.diag(vals) != 0):
            raise ValidationError("distance matrix must have a zero diagonal")
        if np.any(vals < 0) or np.any(vals > 1):
            raise ValidationError("distances must lie in [0, 1]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "labels", labels)

    def __getitem__(self, key):
        a, b = key
        i = self.labels.index(str(a)) if not isinstance(a, int) else a
        j = self.labels.index(str(b)) if not isinstance(b, int) else b
        return float(self.values[i, j])

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "DistanceMatrix":
        return cls(tuple(data["labels"]), np.asarray(data["values"], dtype=float))

    def __eq__(self, other):
        if not isinstance(other, DistanceMatrix):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class RBDecayData:
    """Randomized-benchmarking survival curve: ``(length, survival)`` points."""

    points: Tuple[Tuple[int, float], ...]
    dimension: int = 4

    def __post_init__(self):
        pts = tuple((int(m), float(s)) for m, s in self.points)
        lengths = [m for m, _ in pts]
        if any(m < 1 for m in lengths):
            raise ValidationError("sequence lengths must be positive")
        if any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise ValidationError("sequence lengths must be strictly increasing")
        if len(lengths) < 3:
            raise ValidationError("need at least 3 distinct sequence lengths")
        if any(not (0.0 <= s <= 1.0) for _, s in pts):
            raise ValidationError("survival probabilities must lie in [0, 1]")
        if int(self.dimension) < 2:
            raise ValidationError("dimension must be at least 2")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "dimension", int(self.dimension))

    @property
    def lengths(self) -> np.ndarray:
        return np.array([m for m, _ in self.points], dtype=float)

    @property
    def survival(self) -> np.ndarray:
        return np.array([s for _, s in self.points], dtype=float)


def sort_locations(locs: Iterable[Location]) -> List[Location]:
    """Registers first (ascending), then edges (lexicographic)."""
    return sorted(locs, key=lambda x: (1, x) if isinstance(x, tuple) else (0, (x,)))


_SPAN_UNITS = {
    "us": timedelta(microseconds=1),
    "ms": timedelta(milliseconds=1),
    "s": timedelta(seconds=1),
    "min": timedelta(minutes=1),
    "h": timedelta(hours=1),
    "d": timedelta(days=1),
    "w": timedelta(weeks=1),
}


def parse_timespan(text: Union[str, int, float, timedelta]) -> timedelta:
    """Parse ``"90d"``, ``"12h"``, ``"30min"`` or a bare number of days."""
    if isinstance(text, timedelta):
        return text
    if isinstance(text, (int, float)):
        return timedelta(days=text)
    m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+)\s*([a-z]*)\s*", str(text).lower())
    if not m or (m.group(2) or "d") not in _SPAN_UNITS:
        raise ValidationError(f"cannot parse time span {text!r}")
    return float(m.group(1)) * _SPAN_UNITS[m.group(2) or "d"]


def format_timespan(span: timedelta) -> str:
    for unit in ("w", "d", "h", "min", "s", "ms", "us"):
        q, r = divmod(span, _SPAN_UNITS[unit])
        if r == timedelta(0) and q:
            return f"{q}{unit}"
    return "0s"
