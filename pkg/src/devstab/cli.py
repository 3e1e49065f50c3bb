"""Command-line front end.

Subcommands: metrics, temporal, spatial, interdevice, addressability, synth.
Exit codes: 0 success, 1 input/validation error, 2 internal error.
Settings resolve as defaults < ``--config`` JSON file < command-line flags,
and the resolved settings are written to ``config.json`` in the output
directory.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import sys
import warnings
from datetime import timedelta
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from devstab import ingest, metrics, stability, synth
from devstab.distance import BinningSpec
from devstab.model import (
    DeviceTopology,
    DevStabError,
    MetricKind,
    MetricSeries,
    PreparedState,
    ValidationError,
    format_timespan,
    load_topology,
    location_label,
    nearest_neighbor_pairs,
    parse_location,
    parse_timespan,
)

logger = logging.getLogger("devstab")

DEFAULTS = {
    "topology": None,
    "input": [],
    "metric": "init_fidelity",
    "location": [],
    "window": "90d",
    "lag": "30d",
    "stride": None,
    "bins": "auto",
    "bin_width": None,
    "global_edges": False,
    "allow_overlap": False,
    "min_count": stability.DEFAULT_MIN_COUNT,
    "pairs": "all",
    "reference": "sliding",
    "format": "csv",
    "out": "out",
    "seed": None,
    "shots_window": 1000,
}

READOUT_METRICS = (MetricKind.ADDRESSABILITY, MetricKind.NMI)


class UsageError(DevStabError):
    pass


# --------------------------------------------------------------------------
# Config resolution
# --------------------------------------------------------------------------


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            cfg.update(json.loads(path.read_text()))
        except ValueError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is None or val == [] or val is False:
            continue
        cfg[key] = val
    if isinstance(cfg["input"], str):
        cfg["input"] = [cfg["input"]]
    if isinstance(cfg["location"], (str, int)):
        cfg["location"] = [cfg["location"]]
    cfg["command"] = args.command
    if cfg["format"] not in ("csv", "json"):
        raise UsageError(f"--format must be csv or json, got {cfg['format']!r}")
    if cfg["pairs"] not in ("all", "edges"):
        raise UsageError(f"--pairs must be all or edges, got {cfg['pairs']!r}")
    for key in ("window", "lag", "stride"):
        if cfg[key] is not None:
            span = parse_timespan(cfg[key])
            if span <= timedelta(0) and not (key == "lag" and span == timedelta(0)):
                raise UsageError(f"--{key} must be positive")
    return cfg


def binning(cfg: dict) -> BinningSpec:
    if cfg.get("bin_width") is not None:
        return BinningSpec.fixed_width(float(cfg["bin_width"]))
    bins = cfg.get("bins", "auto")
    if bins in (None, "auto", "sqrt"):
        return BinningSpec()
    try:
        return BinningSpec.fixed_count(int(bins))
    except (TypeError, ValueError):
        raise UsageError(f"--bins must be an integer or 'auto', got {bins!r}") from None


def _inputs(cfg: dict, at_least: int = 1) -> List[str]:
    inputs = list(cfg["input"])
    if len(inputs) < at_least:
        raise UsageError(f"{cfg['command']} needs at least {at_least} --input file(s)")
    for item in inputs:
        path = item.split("=", 1)[1] if "=" in item and not Path(item).exists() else item
        if not Path(path).exists():
            raise FileNotFoundError(f"input file not found: {path}")
    return inputs


def _topology_for(cfg: dict, path: str, device_id: Optional[str] = None) -> DeviceTopology:
    if cfg.get("topology"):
        return load_topology(cfg["topology"])
    return ingest.infer_topology(path, device_id)


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data) -> None:
    ingest.atomic_write_text(path, json.dumps(data, indent=1, sort_keys=True, default=str) + "\n")


def _echo_config(out: Path, cfg: dict) -> None:
    _write_json(out / "config.json", cfg)


# --------------------------------------------------------------------------
# Loading series
# --------------------------------------------------------------------------


def _locations_for(kind: MetricKind, topo: DeviceTopology, cfg: dict):
    if cfg["location"]:
        return [parse_location(x) for x in cfg["location"]]
    return topo.sorted_edges() if kind.per_edge else list(topo.registers)


def _pairs_for(cfg: dict, registers: Sequence[int], topo: Optional[DeviceTopology]):
    if cfg["location"]:
        return [parse_location(x) for x in cfg["location"]]
    if cfg["pairs"] == "edges":
        if topo is None:
            raise UsageError("--pairs edges needs --topology")
        pairs = nearest_neighbor_pairs(topo)
    else:
        pairs = itertools.combinations(sorted(registers), 2)
    return sorted(pairs)


def _readout_series(cfg: dict, path: str, kind: MetricKind) -> Dict[tuple, MetricSeries]:
    m = ingest.parse_readout_file(path)
    window = int(cfg["shots_window"])
    windows = ingest.segment_shots(m, window)
    if not windows:
        raise ValidationError(f"{path}: {m.shots} shots yield no window of {window}")
    topo = load_topology(cfg["topology"]) if cfg.get("topology") else None
    return {
        pair: metrics.addressability_series(windows, pair, kind)
        for pair in _pairs_for(cfg, list(m.register_labels), topo)
    }


def _load_series(cfg: dict, path: str, kind: MetricKind, device_id: Optional[str] = None) -> Dict[object, MetricSeries]:
    """Series per location from a calibration file, readout file or series file."""
    if ingest.is_series_file(path):
        s = ingest.parse_series_file(path)
        return {s.location: s}
    if kind in READOUT_METRICS:
        return _readout_series(cfg, path, kind)
    topo = _topology_for(cfg, path, device_id)
    records = ingest.parse_calibration_file(path, topo)
    out = {}
    for loc in _locations_for(kind, topo, cfg):
        out[loc] = metrics.metric_series_from_calibration(records, kind, loc, device_id or topo.device_id)
    if kind in (MetricKind.DUTY_CYCLE, MetricKind.GATE_DURATION):
        covered = sum(1 for r in records if r.has_gate_length)
        if covered < len(records):
            warnings.warn(
                f"{path}: gate length present in {covered} of {len(records)} records; "
                f"{kind.value} series cover those records only",
                stacklevel=2,
            )
    return out


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def _series_name(kind: MetricKind, loc, fmt: str) -> str:
    return f"{kind.value}_{location_label(loc)}.{fmt}"


def cmd_metrics(cfg: dict) -> int:
    kind = MetricKind.parse(cfg["metric"])
    (path,) = _inputs(cfg)[:1]
    series = _load_series(cfg, path, kind)
    out = _out_dir(cfg)
    for loc, s in series.items():
        ingest.write_series_file(out / _series_name(kind, loc, cfg["format"]), s)
    _echo_config(out, cfg)
    print(f"wrote {len(series)} {kind.value} series to {out}")
    return 0


def cmd_temporal(cfg: dict) -> int:
    kind = MetricKind.parse(cfg["metric"])
    path = _inputs(cfg)[0]
    series = _load_series(cfg, path, kind)
    if len(series) != 1:
        raise UsageError("temporal needs exactly one --location")
    s = next(iter(series.values()))
    ref = cfg["reference"]
    reference = None
    if ref != "sliding":
        if not str(ref).startswith("origin"):
            raise UsageError("--reference must be 'sliding' or 'origin=<date>'")
        date = str(ref).partition("=")[2]
        reference = ingest.parse_timestamp(date) if date else s.times[0]
    res = stability.temporal_stability(
        s,
        window=parse_timespan(cfg["window"]),
        lag=parse_timespan(cfg["lag"]),
        reference=reference,
        spec=binning(cfg),
        stride=parse_timespan(cfg["stride"]) if cfg["stride"] else None,
        min_count=int(cfg["min_count"]),
        allow_overlap=bool(cfg["allow_overlap"]),
    )
    out = _out_dir(cfg)
    rows = [[ingest.format_timestamp(t), d] for t, d in zip(res.times, res.distances)]
    if cfg["format"] == "json":
        _write_json(out / "temporal.json", {"points": rows})
    else:
        text = "timestamp,hellinger\n" + "".join(f"{t},{d!r}\n" for t, d in rows)
        ingest.atomic_write_text(out / "temporal.csv", text)
    summary = {
        "metric": kind.value,
        "location": location_label(s.location),
        "device_id": s.device_id,
        "mode": res.mode,
        "reference": ingest.format_timestamp(reference) if reference else None,
        "window": format_timespan(res.window),
        "lag": format_timespan(res.lag),
        "offset": format_timespan(res.offset) if res.offset is not None else None,
        "stride": format_timespan(res.stride),
        "points": len(res.distances),
        "skipped": [ingest.format_timestamp(t) for t in res.skipped],
        "median": None if math.isnan(res.median) else res.median,
        "max": None if math.isnan(res.max) else res.max,
    }
    _write_json(out / "temporal_summary.json", summary)
    _echo_config(out, cfg)
    print(f"median={summary['median']}")
    return 0


def _emit_matrix(out: Path, stem: str, dm) -> None:
    ingest.write_distance_matrix(out / stem, dm)


def cmd_spatial(cfg: dict) -> int:
    kind = MetricKind.parse(cfg["metric"])
    series: Dict[object, MetricSeries] = {}
    for path in _inputs(cfg):
        for loc, s in _load_series(cfg, path, kind).items():
            if loc in series:
                raise UsageError(f"location {location_label(loc)} supplied twice")
            series[loc] = s
    dm = stability.spatial_stability(series, binning(cfg), global_edges=bool(cfg["global_edges"]))
    out = _out_dir(cfg)
    _emit_matrix(out, "spatial", dm)
    _echo_config(out, cfg)
    print(f"wrote {len(dm.labels)}x{len(dm.labels)} spatial matrix to {out}")
    return 0


def cmd_interdevice(cfg: dict) -> int:
    kind = MetricKind.parse(cfg["metric"])
    inputs = _inputs(cfg)
    if len(inputs) < 2:
        raise UsageError("interdevice needs at least two devices (--input name=path ...)")
    by_device: Dict[str, MetricSeries] = {}
    for item in inputs:
        if "=" in item and not Path(item).exists():
            name, path = item.split("=", 1)
        else:
            name, path = Path(item).stem, item
        if name in by_device:
            raise UsageError(f"device name {name!r} given twice")
        if ingest.is_series_file(path):
            by_device[name] = ingest.parse_series_file(path)
            continue
        topo = _topology_for(cfg, path, name)
        records = ingest.parse_calibration_file(path, topo)
        if len(cfg["location"]) == 1:
            by_device[name] = metrics.metric_series_from_calibration(
                records, kind, parse_location(cfg["location"][0]), name
            )
        else:
            by_device[name] = metrics.device_average_series(
                records, kind, _locations_for(kind, topo, cfg), name
            )
    dm = stability.interdevice_stability(by_device, binning(cfg), global_edges=bool(cfg["global_edges"]))
    out = _out_dir(cfg)
    _emit_matrix(out, "interdevice", dm)
    _echo_config(out, cfg)
    print(f"wrote {len(dm.labels)}x{len(dm.labels)} inter-device matrix to {out}")
    return 0


def cmd_addressability(cfg: dict) -> int:
    kind = MetricKind.parse(cfg["metric"]) if cfg["metric"] in ("nmi", "NMI") else MetricKind.ADDRESSABILITY
    path = _inputs(cfg)[0]
    m = ingest.parse_readout_file(path)
    window = int(cfg["shots_window"])
    windows = ingest.segment_shots(m, window)
    if not windows:
        raise ValidationError(f"{path}: {m.shots} shots yield no window of {window}")
    topo = load_topology(cfg["topology"]) if cfg.get("topology") else None
    pairs = _pairs_for(cfg, list(m.register_labels), topo)
    out = _out_dir(cfg)
    labels = [str(r) for r in m.register_labels]
    pos = {r: k for k, r in enumerate(m.register_labels)}
    mean_matrix = np.full((len(labels), len(labels)), np.nan)
    summary_rows = []
    for pair in pairs:
        s = metrics.addressability_series(windows, pair, kind)
        vals = s.values
        mean_matrix[pos[pair[0]], pos[pair[1]]] = mean_matrix[pos[pair[1]], pos[pair[0]]] = vals.mean()
        summary_rows.append([location_label(pair), len(vals), float(vals.mean()), float(vals.std()),
                             float(vals.min()), float(vals.max())])
        ingest.write_series_file(out / "series" / _series_name(kind, pair, cfg["format"]), s)
    head = "pair,windows,mean,std,min,max\n"
    ingest.atomic_write_text(
        out / "pairs.csv", head + "".join(",".join(str(x) if i < 2 else repr(x) for i, x in enumerate(r)) + "\n"
                                          for r in summary_rows)
    )
    ingest.atomic_write_text(out / "mean_matrix.csv", ingest.matrix_to_csv(labels, mean_matrix))
    _write_json(
        out / "mean_matrix.json",
        {"metric": kind.value, "labels": labels,
         "values": [[None if np.isnan(v) else float(v) for v in row] for row in mean_matrix]},
    )
    _write_json(
        out / "segmentation.json",
        {"shots": m.shots, "window": window, "windows": len(windows),
         "dropped": int(ingest.remainder_shots(m, window).shape[0]), "pairs": len(pairs),
         "prepared_state": str(m.prepared_state)},
    )
    _echo_config(out, cfg)
    print(f"{len(pairs)} pairs x {len(windows)} windows written to {out}")
    return 0


def cmd_synth(cfg: dict) -> int:
    path = Path(_inputs(cfg)[0])
    try:
        model_cfg = json.loads(path.read_text())
    except ValueError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from None
    if cfg["seed"] is not None:
        model_cfg["seed"] = int(cfg["seed"])
    out = _out_dir(cfg)
    kind = model_cfg.get("kind", "calibration")
    meta = {"kind": kind, "seed": int(model_cfg.get("seed", 0))}
    if kind == "calibration":
        topo_spec = model_cfg.get("topology") or cfg.get("topology")
        if topo_spec is None:
            raise UsageError("calibration synth model needs a topology")
        topo = DeviceTopology.from_dict(topo_spec) if isinstance(topo_spec, dict) else load_topology(topo_spec)
        model = synth.DriftModel.from_dict(model_cfg, topo)
        records = synth.generate_calibration(
            model,
            topo,
            ingest.parse_timestamp(model_cfg["start"]),
            ingest.parse_timestamp(model_cfg["end"]),
            parse_timespan(model_cfg.get("cadence", "1d")),
        )
        name = f"calibration.{cfg['format']}"
        ingest.write_calibration_file(out / name, records, topo)
        _write_json(out / "topology.json", topo.to_dict())
        meta.update(records=len(records), file=name, device_id=topo.device_id)
    elif kind == "readout":
        model = synth.PairCorrelationModel.from_dict(model_cfg)
        regs = model_cfg.get("registers", 2)
        start = model_cfg.get("window_start")
        end = model_cfg.get("window_end")
        m = synth.generate_readout(
            model,
            int(model_cfg.get("shots", 8192)),
            regs,
            device_id=model_cfg.get("device_id", "synthetic"),
            prepared_state=PreparedState.parse(model_cfg.get("prepared_state", "AllZeros")),
            window_start=ingest.parse_timestamp(start) if start else None,
            window_end=ingest.parse_timestamp(end) if end else None,
        )
        ingest.write_readout_file(out / "readout.csv", m)
        meta.update(shots=m.shots, registers=len(m.register_labels), file="readout.csv")
    else:
        raise UsageError(f"unknown synth model kind {kind!r}")
    _write_json(out / "synth_meta.json", meta)
    _echo_config(out, cfg)
    print(f"wrote {meta['file']} (seed {meta['seed']}) to {out}")
    return 0


COMMANDS = {
    "metrics": cmd_metrics,
    "temporal": cmd_temporal,
    "spatial": cmd_spatial,
    "interdevice": cmd_interdevice,
    "addressability": cmd_addressability,
    "synth": cmd_synth,
}


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of settings (flags override it)")
    common.add_argument("--topology", help="topology JSON file or bundled name (toronto, yorktown)")
    common.add_argument("--input", action="append", help="input file; repeat for several (interdevice: name=path)")
    common.add_argument("--metric", help="init_fidelity, gate_fidelity, duty_cycle, t2, gate_duration, addressability, nmi")
    common.add_argument("--location", action="append", help="register (3) or pair (0-1); repeatable")
    common.add_argument("--window", help="histogram window, e.g. 90d")
    common.add_argument("--lag", help="reference lag, e.g. 30d")
    common.add_argument("--stride", help="evaluation step (default: the lag)")
    common.add_argument("--bins", help="bin count or 'auto' (ceil(sqrt(n)))")
    common.add_argument("--bin-width", dest="bin_width", type=float, help="fixed bin width")
    common.add_argument("--global-edges", dest="global_edges", action="store_true",
                        help="one set of bin edges for every matrix cell")
    common.add_argument("--allow-overlap", dest="allow_overlap", action="store_true",
                        help="use the lag literally even when it is shorter than the window")
    common.add_argument("--min-count", dest="min_count", type=int, help="minimum values per window")
    common.add_argument("--pairs", choices=("all", "edges"), help="register pairs for readout metrics")
    common.add_argument("--reference", help="'sliding' or 'origin=<ISO date>'")
    common.add_argument("--format", choices=("csv", "json"), help="series output format")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="override the synth model seed")
    common.add_argument("--shots-window", dest="shots_window", type=int, help="shots per readout window (1000)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="devstab", description="Stability statistics for noisy quantum devices.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "metrics": "write per-location metric series",
        "temporal": "running Hellinger distance of one series",
        "spatial": "pairwise distances between locations",
        "interdevice": "pairwise distances between devices",
        "addressability": "per-pair addressability from a readout bitstream",
        "synth": "generate synthetic calibration or readout files",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # bad flags are input errors; --help still exits 0
        return 0 if exc.code in (0, None) else 1
    # a fresh handler per call so repeated in-process runs see the current stderr
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    old_level = root.level
    root.addHandler(handler)
    root.setLevel(logging.INFO if args.verbose else logging.WARNING)
    logging.captureWarnings(True)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except FileNotFoundError as exc:
        print(f"devstab: error: {exc}", file=sys.stderr)
        return 1
    except (DevStabError, ValueError, KeyError) as exc:
        print(f"devstab: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        logger.exception("internal error")
        print(f"devstab: internal error: {exc}", file=sys.stderr)
        return 2
    finally:
        logging.captureWarnings(False)
        root.removeHandler(handler)
        root.setLevel(old_level)


if __name__ == "__main__":
    sys.exit(main())
