"""Synthetic drifting devices with known ground truth.

Random numbers come from NumPy's ``PCG64`` bit generator seeded with the
model's integer seed; Gaussian jitter uses ``Generator.standard_normal``
and correlated readout draws use ``Generator.choice``. Draw order is fixed
(documented on each generator) so a (model, seed) pair always reproduces
the same stream.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from devstab.ingest import parse_timestamp
from devstab.model import (
    ALL_ZEROS,
    CalibrationRecord,
    DeviceTopology,
    Duration,
    Edge,
    PreparedState,
    ReadoutMatrix,
    ValidationError,
    canonical_edge,
    parse_location,
)

FIELDS = ("readout_error", "t2", "cnot_error", "cnot_length")
UNITS = {"t2": "us", "cnot_length": "ns"}
_MIN_DURATION = 1e-6  # floor for clipped durations, in the field's unit


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True)
class ParameterDrift:
    """Base value, daily Gaussian jitter and step changes for one parameter.

    ``steps`` are ``(time, new_base)`` pairs; the base switches at each
    time. ``available_from`` suppresses the parameter before that time.
    """

    base: float
    jitter: float = 0.0
    steps: Tuple[Tuple[datetime, float], ...] = ()
    available_from: Optional[datetime] = None

    def __post_init__(self):
        if self.jitter < 0:
            raise ValidationError("jitter must be non-negative")
        object.__setattr__(self, "steps", tuple(sorted((t, float(v)) for t, v in self.steps)))

    def base_at(self, t: datetime) -> float:
        value = self.base
        for when, new in self.steps:
            if t >= when:
                value = new
        return value

    def to_dict(self) -> dict:
        d = {"base": self.base, "jitter": self.jitter}
        if self.steps:
            d["steps"] = [[t.isoformat(sep=" "), v] for t, v in self.steps]
        if self.available_from is not None:
            d["available_from"] = self.available_from.isoformat(sep=" ")
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ParameterDrift":
        return cls(
            base=float(d["base"]),
            jitter=float(d.get("jitter", 0.0)),
            steps=tuple((parse_timestamp(t), float(v)) for t, v in d.get("steps", ())),
            available_from=parse_timestamp(d["available_from"]) if d.get("available_from") else None,
        )


@dataclass(frozen=True)
class DriftModel:
    """Per-location drift of readout error, T2 (us), CNOT error and CNOT length (ns)."""

    readout_error: Mapping[int, ParameterDrift] = field(default_factory=dict)
    t2: Mapping[int, ParameterDrift] = field(default_factory=dict)
    cnot_error: Mapping[Edge, ParameterDrift] = field(default_factory=dict)
    cnot_length: Mapping[Edge, ParameterDrift] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        for name in ("cnot_error", "cnot_length"):
            object.__setattr__(
                self, name, {canonical_edge(*e): p for e, p in getattr(self, name).items()}
            )
        for name in ("readout_error", "t2"):
            object.__setattr__(self, name, {int(q): p for q, p in getattr(self, name).items()})

    @classmethod
    def uniform(
        cls,
        topology: DeviceTopology,
        readout_error: float = 0.03,
        t2_us: float = 70.0,
        cnot_error: float = 0.015,
        cnot_length_ns: float = 400.0,
        relative_jitter: float = 0.05,
        seed: int = 0,
    ) -> "DriftModel":
        """Same base values at every location, jitter a fixed fraction of the base."""
        def p(base):
            return ParameterDrift(base, relative_jitter * base)

        return cls(
            readout_error={q: p(readout_error) for q in topology.registers},
            t2={q: p(t2_us) for q in topology.registers},
            cnot_error={e: p(cnot_error) for e in topology.sorted_edges()},
            cnot_length={e: p(cnot_length_ns) for e in topology.sorted_edges()},
            seed=seed,
        )

    def replace(self, name: str, location, drift: ParameterDrift) -> "DriftModel":
        """Copy of the model with one parameter swapped."""
        loc = canonical_edge(*location) if name.startswith("cnot") else int(location)
        parts = {f: dict(getattr(self, f)) for f in FIELDS}
        parts[name][loc] = drift
        return DriftModel(seed=self.seed, **parts)

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "parameters": []}
        for name in FIELDS:
            for loc, p in sorted(getattr(self, name).items()):
                out["parameters"].append(
                    {"field": name, "location": list(loc) if isinstance(loc, tuple) else loc, **p.to_dict()}
                )
        return out

    @classmethod
    def from_dict(cls, d: Mapping, topology: Optional[DeviceTopology] = None) -> "DriftModel":
        """Build from JSON: optional ``defaults`` per field (needs ``topology``) plus explicit ``parameters``."""
        parts: Dict[str, dict] = {f: {} for f in FIELDS}
        for name, spec in (d.get("defaults") or {}).items():
            if name not in FIELDS:
                raise ValidationError(f"unknown drift field {name!r}")
            if topology is None:
                raise ValidationError("drift defaults need a topology")
            locs = topology.sorted_edges() if name.startswith("cnot") else list(topology.registers)
            for loc in locs:
                parts[name][loc] = ParameterDrift.from_dict(spec)
        for entry in d.get("parameters", ()):
            name = entry["field"]
            if name not in FIELDS:
                raise ValidationError(f"unknown drift field {name!r}")
            loc = parse_location(entry["location"])
            parts[name][loc] = ParameterDrift.from_dict(entry)
        return cls(seed=int(d.get("seed", 0)), **parts)


def _clip(name: str, v: float) -> float:
    if name in ("readout_error", "cnot_error"):
        return float(min(max(v, 0.0), 1.0))
    return float(max(v, _MIN_DURATION))


def generate_calibration(
    model: DriftModel,
    topology: DeviceTopology,
    start: datetime,
    end: datetime,
    cadence: timedelta = timedelta(days=1),
) -> List[CalibrationRecord]:
    """One record per tick ``start + k * cadence`` in ``[start, end)``.

    For each tick the generator draws one standard normal per modeled
    parameter, in the order: registers ascending (readout error, T2), then
    edges ascending (CNOT error, CNOT length). Draws happen even for
    zero-jitter or not-yet-available parameters so that editing one
    parameter never shifts another's noise.
    """
    if not start < end:
        raise ValidationError("start must precede end")
    if cadence <= timedelta(0):
        raise ValidationError("cadence must be positive")
    for name in ("readout_error", "t2"):
        for q in getattr(model, name):
            if not 0 <= q < topology.capacity:
                raise ValidationError(f"{name} register {q} outside topology")
    for name in ("cnot_error", "cnot_length"):
        for e in getattr(model, name):
            if e not in topology.edges:
                raise ValidationError(f"{name} edge {e} not in topology")

    columns: List[Tuple[str, object, ParameterDrift]] = []
    for q in topology.registers:
        for name in ("readout_error", "t2"):
            if q in getattr(model, name):
                columns.append((name, q, getattr(model, name)[q]))
    for e in topology.sorted_edges():
        for name in ("cnot_error", "cnot_length"):
            if e in getattr(model, name):
                columns.append((name, e, getattr(model, name)[e]))

    ticks = []
    t = start
    while t < end:
        ticks.append(t)
        t = t + cadence
    rng = make_rng(model.seed)
    noise = rng.standard_normal((len(ticks), len(columns)))

    records = []
    for k, t in enumerate(ticks):
        maps: Dict[str, dict] = {f: {} for f in FIELDS}
        for c, (name, loc, drift) in enumerate(columns):
            if drift.available_from is not None and t < drift.available_from:
                continue
            maps[name][loc] = _clip(name, drift.base_at(t) + drift.jitter * noise[k, c])
        lengths = {e: Duration(v, UNITS["cnot_length"]) for e, v in maps["cnot_length"].items()}
        records.append(
            CalibrationRecord(
                last_update=t,
                readout_error=maps["readout_error"],
                readout_cal_time={q: t for q in maps["readout_error"]},
                cnot_error=maps["cnot_error"],
                cnot_cal_time={e: t for e in maps["cnot_error"]},
                t2={q: Duration(v, UNITS["t2"]) for q, v in maps["t2"].items()},
                t2_cal_time={q: t for q in maps["t2"]},
                cnot_length=lengths or None,
                cnot_length_cal_time={e: t for e in lengths} if lengths else None,
                cnot_direction={e: e for e in maps["cnot_error"]},
            )
        )
    return records


# --------------------------------------------------------------------------
# Readout
# --------------------------------------------------------------------------


BELL = (0.5, 0.0, 0.0, 0.5)
INDEPENDENT_UNIFORM = (0.25, 0.25, 0.25, 0.25)


@dataclass(frozen=True)
class PairCorrelationModel:
    """Joint outcome probabilities ``(p00, p01, p10, p11)`` per register pair.

    The first bit belongs to the smaller register index. Registers outside
    every pair read 1 independently with probability ``readout_error[q]``
    (``default_error`` when absent). Pairs must not share registers.
    """

    pairs: Mapping[Edge, Tuple[float, float, float, float]] = field(default_factory=dict)
    readout_error: Mapping[int, float] = field(default_factory=dict)
    default_error: float = 0.0
    seed: int = 0

    def __post_init__(self):
        canon = {}
        for pair, probs in self.pairs.items():
            e = canonical_edge(*pair)
            if tuple(pair) != e:
                # reorder (p00, p01, p10, p11) to the canonical bit order
                probs = (probs[0], probs[2], probs[1], probs[3])
            p = tuple(float(x) for x in probs)
            if len(p) != 4 or any(x < 0 for x in p) or abs(sum(p) - 1.0) > 1e-12:
                raise ValidationError(f"pair {e} probabilities {p} must be 4 non-negatives summing to 1")
            canon[e] = p
        used = list(itertools.chain.from_iterable(canon))
        if len(used) != len(set(used)):
            raise ValidationError("correlated pairs must not share registers")
        errs = {int(q): float(v) for q, v in self.readout_error.items()}
        for q, v in list(errs.items()) + [("default", self.default_error)]:
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"readout error for {q} = {v} outside [0, 1]")
        object.__setattr__(self, "pairs", canon)
        object.__setattr__(self, "readout_error", errs)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "default_error": self.default_error,
            "readout_error": {str(q): v for q, v in sorted(self.readout_error.items())},
            "pairs": [{"pair": list(e), "probabilities": list(p)} for e, p in sorted(self.pairs.items())],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PairCorrelationModel":
        return cls(
            pairs={tuple(x["pair"]): tuple(x["probabilities"]) for x in d.get("pairs", ())},
            readout_error={int(q): float(v) for q, v in (d.get("readout_error") or {}).items()},
            default_error=float(d.get("default_error", 0.0)),
            seed=int(d.get("seed", 0)),
        )


def generate_readout(
    model: PairCorrelationModel,
    shots: int,
    registers: Union[int, Sequence[int]],
    device_id: str = "synthetic",
    prepared_state: PreparedState = ALL_ZEROS,
    window_start: Optional[datetime] = None,
    window_end: Optional[datetime] = None,
) -> ReadoutMatrix:
    """Draw a shots x registers bit matrix.

    Draw order: each modeled pair in ascending order takes ``shots`` draws
    from ``choice(4, p=probs)``; then each remaining register in ascending
    order takes ``shots`` uniform draws thresholded at its readout error.
    """
    shots = int(shots)
    if shots < 1:
        raise ValidationError("shots must be >= 1")
    labels = list(range(registers)) if isinstance(registers, (int, np.integer)) else [int(r) for r in registers]
    index = {r: k for k, r in enumerate(labels)}
    for e in model.pairs:
        if e[0] not in index or e[1] not in index:
            raise ValidationError(f"modeled pair {e} not among registers")
    rng = make_rng(model.seed)
    bits = np.zeros((shots, len(labels)), dtype=np.uint8)
    for e, p in sorted(model.pairs.items()):
        outcome = rng.choice(4, size=shots, p=np.asarray(p))
        bits[:, index[e[0]]] = outcome >> 1
        bits[:, index[e[1]]] = outcome & 1
    paired = set(itertools.chain.from_iterable(model.pairs))
    for r in sorted(labels):
        if r in paired:
            continue
        e_r = model.readout_error.get(r, model.default_error)
        bits[:, index[r]] = rng.random(shots) < e_r
    return ReadoutMatrix(
        device_id=device_id,
        bits=bits,
        register_labels=tuple(labels),
        prepared_state=prepared_state,
        window_start=window_start,
        window_end=window_end,
        metadata={"seed": str(model.seed)},
    )


__all__ = [
    "ParameterDrift",
    "DriftModel",
    "PairCorrelationModel",
    "generate_calibration",
    "generate_readout",
    "make_rng",
    "BELL",
    "INDEPENDENT_UNIFORM",
]
