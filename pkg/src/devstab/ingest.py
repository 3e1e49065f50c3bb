"""Readers and writers for calibration tables and readout bitstreams.

Calibration CSV columns follow the public backend-properties dumps::

    last_update_date, q0_readout_err, q0_readout_err_cal_time,
    q0_T2, q0_T2_unit, q0_T2_cal_time,
    cx01_gate_err, cx01_gate_err_cal_time,
    cx01_gate_length, cx01_gate_length_unit, cx01_gate_length_cal_time, ...

Edge columns use ``cx{i}{j}`` when both indices are single digits and
``cx{i}_{j}`` otherwise. Timestamps are ISO-8601 with a UTC offset.

Readout CSV files carry ``# key=value`` metadata lines, then a ``q0,q1,...``
header, then one row of 0/1 entries per shot.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import re
import warnings
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from devstab.model import (
    CalibrationRecord,
    DeviceTopology,
    DistanceMatrix,
    Duration,
    Edge,
    MetricKind,
    MetricSeries,
    ParseError,
    PreparedState,
    ReadoutMatrix,
    ValidationError,
    canonical_edge,
    location_label,
    parse_location,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_REG_FIELDS = {
    "readout_err": ("readout_error", "value"),
    "readout_err_cal_time": ("readout_cal_time", "time"),
    "T2": ("t2", "duration"),
    "T2_unit": ("t2", "unit"),
    "T2_cal_time": ("t2_cal_time", "time"),
}
_EDGE_FIELDS = {
    "gate_err": ("cnot_error", "value"),
    "gate_err_cal_time": ("cnot_cal_time", "time"),
    "gate_length": ("cnot_length", "duration"),
    "gate_length_unit": ("cnot_length", "unit"),
    "gate_length_cal_time": ("cnot_length_cal_time", "time"),
}
_REG_RE = re.compile(r"q(\d+)_(readout_err_cal_time|readout_err|T2_cal_time|T2_unit|T2)")
_EDGE_RE = re.compile(
    r"cx(\d+)(?:_(\d+))?_(gate_err_cal_time|gate_err|gate_length_cal_time|gate_length_unit|gate_length)"
)
_DEFAULT_UNITS = {"t2": "us", "cnot_length": "ns"}


# --------------------------------------------------------------------------
# Column naming
# --------------------------------------------------------------------------


def edge_column_prefix(control: int, target: int) -> str:
    if control < 10 and target < 10:
        return f"cx{control}{target}"
    return f"cx{control}_{target}"


def _split_edge_digits(digits: str, topology: Optional[DeviceTopology]) -> Optional[Tuple[int, int]]:
    """Split an unseparated ``cx`` index string such as ``"1213"`` into (control, target)."""
    if len(digits) == 2:
        return int(digits[0]), int(digits[1])
    candidates = []
    for k in range(1, len(digits)):
        a, b = digits[:k], digits[k:]
        if (len(a) > 1 and a[0] == "0") or (len(b) > 1 and b[0] == "0"):
            continue
        i, j = int(a), int(b)
        if i == j:
            continue
        if topology is None or topology.has_edge(i, j):
            candidates.append((i, j))
    if len(candidates) == 1:
        return candidates[0]
    return None


def _classify_column(name: str, topology: Optional[DeviceTopology]):
    """Return ``("reg", idx, field)``, ``("edge", (ctrl, tgt), field)``, or None."""
    m = _REG_RE.fullmatch(name)
    if m:
        return "reg", int(m.group(1)), m.group(2)
    m = _EDGE_RE.fullmatch(name)
    if m:
        if m.group(2) is not None:
            pair = (int(m.group(1)), int(m.group(2)))
        else:
            pair = _split_edge_digits(m.group(1), topology)
            if pair is None:
                return None
        return "edge", pair, m.group(3)
    return None


def infer_topology(path: PathLike, device_id: Optional[str] = None) -> DeviceTopology:
    """Build a topology from the column names of a calibration CSV/JSON file."""
    path = Path(path)
    header = _read_header(path)
    regs, edges = set(), set()
    for name in header:
        c = _classify_column(name, None)
        if c is None:
            continue
        if c[0] == "reg":
            regs.add(c[1])
        else:
            regs.update(c[1])
            edges.add(canonical_edge(*c[1]))
    capacity = max(regs) + 1 if regs else 1
    return DeviceTopology(device_id or path.stem, capacity, frozenset(edges))


def _read_header(path: Path) -> List[str]:
    if path.suffix.lower() == ".json":
        rows = json.loads(path.read_text())
        names: Dict[str, None] = {}
        for row in rows:
            names.update(dict.fromkeys(row))
        return list(names)
    with path.open(newline="") as fh:
        return next(csv.reader(fh), [])


# --------------------------------------------------------------------------
# Calibration files
# --------------------------------------------------------------------------


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp that carries a UTC offset."""
    ts = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if ts.tzinfo is None:
        raise ValueError(f"timestamp {text!r} has no UTC offset")
    return ts


def format_timestamp(ts: datetime) -> str:
    return ts.isoformat(sep=" ")


def _parse_float(text: str) -> float:
    v = float(text)
    if v != v:
        raise ValueError("NaN")
    return v


def parse_calibration_file(path: PathLike, topology: DeviceTopology) -> List[CalibrationRecord]:
    """Read calibration records from a CSV (or JSON mirror) file.

    Records are returned sorted by ``last_update``. Empty cells leave the
    corresponding entry absent. Unknown columns are ignored with a warning.
    When the same canonical edge appears under both directions (``cx01`` and
    ``cx10``) the first column in header order wins.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    ParseError
        On a malformed timestamp or number; carries the data-row index.
    ValidationError
        On an error rate outside [0, 1], a non-positive duration, or a
        column that names a register/edge absent from ``topology``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"calibration file not found: {path}")
    if path.suffix.lower() == ".json":
        rows = json.loads(path.read_text())
        if not isinstance(rows, list):
            raise ParseError(f"{path}: JSON calibration file must hold a list of row objects")
        header = _read_header(path)
        rows = [{k: ("" if v is None else str(v)) for k, v in r.items()} for r in rows]
    else:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            header = list(reader.fieldnames or [])
            rows = list(reader)
    return _records_from_rows(header, rows, topology, str(path))


def _column_plan(header: Sequence[str], topology: DeviceTopology, source: str):
    if "last_update_date" not in header and header:
        raise ParseError(f"{source}: missing last_update_date column")
    plan = {}
    seen_edge_dir: Dict[Edge, Tuple[int, int]] = {}
    for name in header:
        if name == "last_update_date":
            continue
        c = _classify_column(name, topology)
        if c is None:
            warnings.warn(f"{source}: unknown column {name!r} ignored", stacklevel=3)
            continue
        kind, key, fld = c
        if kind == "reg":
            if not 0 <= key < topology.capacity:
                raise ValidationError(
                    f"{source}: column {name!r} names register {key} outside [0, {topology.capacity})"
                )
            plan[name] = ("reg", key, key, fld)
        else:
            if not topology.has_edge(*key):
                raise ValidationError(
                    f"{source}: column {name!r} names edge {key} not in topology {topology.device_id!r}"
                )
            edge = canonical_edge(*key)
            first = seen_edge_dir.setdefault(edge, key)
            if first != key:
                warnings.warn(
                    f"{source}: column {name!r} duplicates edge {edge} already read as "
                    f"cx{first[0]}{first[1]}; ignored",
                    stacklevel=3,
                )
                continue
            plan[name] = ("edge", edge, key, fld)
    return plan


def _records_from_rows(header, rows, topology, source) -> List[CalibrationRecord]:
    plan = _column_plan(header, topology, source)
    records = []
    for r, row in enumerate(rows):
        try:
            last_update = parse_timestamp(row.get("last_update_date") or "")
        except ValueError as exc:
            raise ParseError(f"{source}: bad last_update_date: {exc}", row=r, column="last_update_date") from None
        maps: Dict[str, dict] = {
            "readout_error": {}, "readout_cal_time": {}, "t2": {}, "t2_cal_time": {},
            "cnot_error": {}, "cnot_cal_time": {}, "cnot_length": {}, "cnot_length_cal_time": {},
        }
        units: Dict[Tuple[str, object], str] = {}
        direction: Dict[Edge, Edge] = {}
        for name, (kind, key, raw_key, fld) in plan.items():
            cell = (row.get(name) or "").strip()
            if not cell:
                continue
            target, what = (_REG_FIELDS if kind == "reg" else _EDGE_FIELDS)[fld]
            try:
                if what == "time":
                    maps[target][key] = parse_timestamp(cell)
                elif what == "unit":
                    units[(target, key)] = cell
                else:
                    maps[target][key] = _parse_float(cell)
            except ValueError as exc:
                raise ParseError(f"{source}: bad value {cell!r}: {exc}", row=r, column=name) from None
            if kind == "edge":
                direction[key] = raw_key
        for target in ("readout_error", "cnot_error"):
            for key, v in maps[target].items():
                if not 0.0 <= v <= 1.0:
                    raise ValidationError(f"{source}: row {r}: {target}[{key}] = {v} outside [0, 1]")
        for target in ("t2", "cnot_length"):
            converted = {}
            for key, v in maps[target].items():
                unit = units.get((target, key), _DEFAULT_UNITS[target])
                try:
                    converted[key] = Duration(v, unit)
                except ValidationError as exc:
                    raise ValidationError(f"{source}: row {r}: {target}[{key}]: {exc}") from None
            maps[target] = converted
        has_len = bool(maps["cnot_length"])
        records.append(
            CalibrationRecord(
                last_update=last_update,
                readout_error=maps["readout_error"],
                readout_cal_time=maps["readout_cal_time"],
                cnot_error=maps["cnot_error"],
                cnot_cal_time=maps["cnot_cal_time"],
                t2=maps["t2"],
                t2_cal_time=maps["t2_cal_time"],
                cnot_length=maps["cnot_length"] if has_len else None,
                cnot_length_cal_time=maps["cnot_length_cal_time"] if has_len else None,
                cnot_direction={e: d for e, d in direction.items()},
            )
        )
    records.sort(key=lambda rec: rec.last_update)
    return records


def calibration_header(topology: DeviceTopology, records: Sequence[CalibrationRecord] = ()) -> List[str]:
    """Column names for ``topology``, honoring edge directions seen in ``records``."""
    cols = ["last_update_date"]
    for q in topology.registers:
        cols += [
            f"q{q}_readout_err", f"q{q}_readout_err_cal_time",
            f"q{q}_T2", f"q{q}_T2_unit", f"q{q}_T2_cal_time",
        ]
    direction: Dict[Edge, Edge] = {}
    for rec in records:
        for e, d in rec.cnot_direction.items():
            direction.setdefault(e, d)
    for e in topology.sorted_edges():
        p = edge_column_prefix(*direction.get(e, e))
        cols += [
            f"{p}_gate_err", f"{p}_gate_err_cal_time",
            f"{p}_gate_length", f"{p}_gate_length_unit", f"{p}_gate_length_cal_time",
        ]
    return cols


def _record_row(rec: CalibrationRecord, topology: DeviceTopology, direction: Dict[Edge, Edge]) -> Dict[str, str]:
    def ts(m, k):
        return format_timestamp(m[k]) if m and k in m else ""

    row = {"last_update_date": format_timestamp(rec.last_update)}
    for q in topology.registers:
        row[f"q{q}_readout_err"] = repr(rec.readout_error[q]) if q in rec.readout_error else ""
        row[f"q{q}_readout_err_cal_time"] = ts(rec.readout_cal_time, q)
        t2 = rec.t2.get(q)
        row[f"q{q}_T2"] = repr(t2.value) if t2 else ""
        row[f"q{q}_T2_unit"] = t2.unit if t2 else ""
        row[f"q{q}_T2_cal_time"] = ts(rec.t2_cal_time, q)
    for e in topology.sorted_edges():
        p = edge_column_prefix(*direction.get(e, e))
        row[f"{p}_gate_err"] = repr(rec.cnot_error[e]) if e in rec.cnot_error else ""
        row[f"{p}_gate_err_cal_time"] = ts(rec.cnot_cal_time, e)
        gl = rec.cnot_length.get(e) if rec.cnot_length else None
        row[f"{p}_gate_length"] = repr(gl.value) if gl else ""
        row[f"{p}_gate_length_unit"] = gl.unit if gl else ""
        row[f"{p}_gate_length_cal_time"] = ts(rec.cnot_length_cal_time, e)
    return row


def calibration_to_csv(records: Sequence[CalibrationRecord], topology: DeviceTopology) -> str:
    """Serialize records in the calibration CSV format (inverse of the parser)."""
    header = calibration_header(topology, records)
    direction: Dict[Edge, Edge] = {}
    for rec in records:
        for e, d in rec.cnot_direction.items():
            direction.setdefault(e, d)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow(_record_row(rec, topology, direction))
    return buf.getvalue()


def calibration_to_json(records: Sequence[CalibrationRecord], topology: DeviceTopology) -> str:
    """JSON mirror of :func:`calibration_to_csv`: a list of row objects, empty cells omitted."""
    direction: Dict[Edge, Edge] = {}
    for rec in records:
        for e, d in rec.cnot_direction.items():
            direction.setdefault(e, d)
    rows = [
        {k: v for k, v in _record_row(rec, topology, direction).items() if v != ""}
        for rec in records
    ]
    return json.dumps(rows, indent=1) + "\n"


def write_calibration_file(path: PathLike, records: Sequence[CalibrationRecord], topology: DeviceTopology) -> Path:
    path = Path(path)
    text = (
        calibration_to_json(records, topology)
        if path.suffix.lower() == ".json"
        else calibration_to_csv(records, topology)
    )
    atomic_write_text(path, text)
    return path


# --------------------------------------------------------------------------
# Readout files
# --------------------------------------------------------------------------


def parse_readout_file(path: PathLike) -> ReadoutMatrix:
    """Read a readout bitstream CSV into a :class:`ReadoutMatrix`.

    Raises :class:`ParseError` for non-binary entries (with row and column)
    and for rows whose length differs from the header.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"readout file not found: {path}")
    meta: Dict[str, str] = {}
    with path.open() as fh:
        line = fh.readline()
        while line.startswith("#"):
            body = line[1:].strip()
            if body:
                if "=" not in body:
                    raise ParseError(f"{path}: metadata line {line.strip()!r} is not key=value")
                k, v = body.split("=", 1)
                meta[k.strip()] = v.strip()
            line = fh.readline()
        header = [h.strip() for h in line.strip().split(",")] if line.strip() else []
        body_text = fh.read()
    if not header:
        raise ParseError(f"{path}: missing register header")
    try:
        labels = tuple(int(h[1:]) if h.startswith("q") else int(h) for h in header)
    except ValueError:
        raise ParseError(f"{path}: bad register header {header}") from None

    lines = [ln for ln in body_text.splitlines() if ln.strip()]
    ncol = len(labels)
    for r, ln in enumerate(lines):
        if ln.count(",") != ncol - 1:
            raise ParseError(f"{path}: ragged row with {ln.count(',') + 1} entries, expected {ncol}", row=r)
    if not lines:
        raise ParseError(f"{path}: no shots")
    try:
        arr = np.loadtxt(io.StringIO("\n".join(lines)), delimiter=",", dtype=np.int64, ndmin=2)
    except ValueError:
        arr = None
    if arr is None:
        for r, ln in enumerate(lines):
            for c, cell in enumerate(ln.split(",")):
                if cell.strip() not in ("0", "1"):
                    raise ParseError(f"{path}: non-binary entry {cell.strip()!r}", row=r, column=header[c])
        raise ParseError(f"{path}: unreadable bit rows")
    bad = np.argwhere((arr != 0) & (arr != 1))
    if bad.size:
        r, c = (int(x) for x in bad[0])
        raise ParseError(f"{path}: non-binary entry {arr[r, c]}", row=r, column=header[c])

    try:
        state = PreparedState.parse(meta.get("prepared_state", "AllZeros"))
        start = parse_timestamp(meta["window_start"]) if meta.get("window_start") else None
        end = parse_timestamp(meta["window_end"]) if meta.get("window_end") else None
    except ValueError as exc:
        raise ParseError(f"{path}: bad metadata: {exc}") from None
    extra = {k: v for k, v in meta.items() if k not in ("device_id", "prepared_state", "window_start", "window_end")}
    return ReadoutMatrix(
        device_id=meta.get("device_id", path.stem),
        bits=arr,
        register_labels=labels,
        prepared_state=state,
        window_start=start,
        window_end=end,
        metadata=extra,
    )


def readout_to_csv(m: ReadoutMatrix, extra_metadata: Optional[Dict[str, str]] = None) -> str:
    meta = {"device_id": m.device_id, "prepared_state": str(m.prepared_state)}
    if m.window_start is not None:
        meta["window_start"] = format_timestamp(m.window_start)
    if m.window_end is not None:
        meta["window_end"] = format_timestamp(m.window_end)
    meta.update(m.metadata)
    meta.update(extra_metadata or {})
    out = [f"# {k}={v}" for k, v in meta.items()]
    out.append(",".join(f"q{r}" for r in m.register_labels))
    lut = np.array(["0", "1"])
    out.extend(",".join(row) for row in lut[m.bits])
    return "\n".join(out) + "\n"


def write_readout_file(path: PathLike, m: ReadoutMatrix, extra_metadata: Optional[Dict[str, str]] = None) -> Path:
    path = Path(path)
    atomic_write_text(path, readout_to_csv(m, extra_metadata))
    return path


# --------------------------------------------------------------------------
# Segmentation
# --------------------------------------------------------------------------


def _window_times(m: ReadoutMatrix, lo: int, hi: int):
    if m.window_start is None or m.window_end is None:
        return m.window_start, m.window_end
    span = m.window_end - m.window_start
    return m.window_start + span * (lo / m.shots), m.window_start + span * (hi / m.shots)


def segment_shots(m: ReadoutMatrix, window: int) -> List[ReadoutMatrix]:
    """Split ``m`` into ``shots // window`` contiguous windows of ``window`` shots.

    The trailing ``shots % window`` shots are dropped (see
    :func:`remainder_shots`) so every window has the same size. Window
    timestamps are interpolated linearly over the parent's time span.
    """
    window = int(window)
    if window < 1:
        raise ValidationError(f"window must be >= 1, got {window}")
    count = m.shots // window
    dropped = m.shots - count * window
    if count == 0:
        warnings.warn(f"window {window} exceeds {m.shots} shots; no windows produced", stacklevel=2)
        return []
    if dropped:
        logger.info("segment_shots: %d windows of %d shots, %d trailing shots dropped", count, window, dropped)
    out = []
    for k in range(count):
        lo, hi = k * window, (k + 1) * window
        start, end = _window_times(m, lo, hi)
        out.append(
            ReadoutMatrix(
                device_id=m.device_id,
                bits=m.bits[lo:hi],
                register_labels=m.register_labels,
                prepared_state=m.prepared_state,
                window_start=start,
                window_end=end,
                metadata=dict(m.metadata, window_index=str(k)),
            )
        )
    return out


def remainder_shots(m: ReadoutMatrix, window: int) -> np.ndarray:
    """The trailing shots that :func:`segment_shots` drops, as a bit array."""
    count = m.shots // int(window)
    return m.bits[count * int(window):]


# --------------------------------------------------------------------------
# Small file helpers
# --------------------------------------------------------------------------


def atomic_write_text(path: Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    with tmp.open("w", newline="") as fh:
        fh.write(text)
    tmp.replace(path)


# --------------------------------------------------------------------------
# Metric series and matrices
# --------------------------------------------------------------------------


def series_to_csv(series: MetricSeries) -> str:
    lines = [
        f"# metric={series.kind.value}",
        f"# location={location_label(series.location)}",
        f"# device_id={series.device_id}",
        "timestamp,value",
    ]
    lines += [f"{format_timestamp(t)},{v!r}" for t, v in series.points]
    return "\n".join(lines) + "\n"


def series_to_json(series: MetricSeries) -> str:
    return json.dumps(
        {
            "metric": series.kind.value,
            "location": location_label(series.location),
            "device_id": series.device_id,
            "points": [[format_timestamp(t), v] for t, v in series.points],
        },
        indent=1,
    ) + "\n"


def write_series_file(path: PathLike, series: MetricSeries) -> Path:
    path = Path(path)
    text = series_to_json(series) if path.suffix.lower() == ".json" else series_to_csv(series)
    atomic_write_text(path, text)
    return path


def parse_series_file(path: PathLike) -> MetricSeries:
    """Read a metric series written by :func:`write_series_file`."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"series file not found: {path}")
    try:
        if path.suffix.lower() == ".json":
            d = json.loads(path.read_text())
            meta = {k: d[k] for k in ("metric", "location", "device_id")}
            rows = d["points"]
        else:
            meta, rows = {}, []
            with path.open() as fh:
                for line in fh:
                    if line.startswith("#"):
                        k, _, v = line[1:].strip().partition("=")
                        meta[k.strip()] = v.strip()
                    elif line.strip() and not line.startswith("timestamp"):
                        t, _, v = line.strip().partition(",")
                        rows.append((t, v))
        points = tuple((parse_timestamp(t), float(v)) for t, v in rows)
        return MetricSeries(
            MetricKind.parse(meta["metric"]),
            parse_location(meta["location"]),
            meta.get("device_id", ""),
            points,
        )
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ParseError(f"{path}: not a metric series file: {exc}") from None


def is_series_file(path: PathLike) -> bool:
    path = Path(path)
    if path.suffix.lower() == ".json":
        try:
            return isinstance(json.loads(path.read_text()), dict)
        except ValueError:
            return False
    with path.open() as fh:
        return fh.readline().startswith("# metric=")


def matrix_to_csv(labels: Sequence[str], values: np.ndarray) -> str:
    """Labeled square matrix; NaN cells are written empty."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + list(labels))
    for lab, row in zip(labels, np.asarray(values, dtype=float)):
        w.writerow([lab] + ["" if np.isnan(v) else repr(float(v)) for v in row])
    return buf.getvalue()


def parse_matrix_csv(path: PathLike) -> Tuple[List[str], np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    labels = rows[0][1:]
    values = np.array([[float(c) if c else np.nan for c in r[1:]] for r in rows[1:]])
    return labels, values


def write_distance_matrix(stem: PathLike, dm: DistanceMatrix) -> Tuple[Path, Path]:
    """Write ``<stem>.csv`` and its ``<stem>.json`` twin."""
    stem = Path(stem)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    atomic_write_text(csv_path, matrix_to_csv(dm.labels, dm.values))
    atomic_write_text(json_path, json.dumps(dm.to_dict(), indent=1) + "\n")
    return csv_path, json_path


def parse_distance_matrix(path: PathLike) -> DistanceMatrix:
    path = Path(path)
    if path.suffix.lower() == ".json":
        return DistanceMatrix.from_dict(json.loads(path.read_text()))
    labels, values = parse_matrix_csv(path)
    return DistanceMatrix(tuple(labels), values)
