import json
import shutil

import numpy as np
import pytest

from devstab import cli
from devstab.ingest import (
    parse_calibration_file,
    parse_distance_matrix,
    parse_readout_file,
    parse_series_file,
    write_calibration_file,
    write_series_file,
)
from devstab.model import MetricKind, MetricSeries, load_topology

START = "2020-01-01 00:00:00+00:00"


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def snapshot(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


def calibration_model(tmp_path, jitter=0.05, seed=3, days=200, name="cal_model.json", **extra):
    model = {
        "kind": "calibration",
        "topology": "yorktown",
        "start": START,
        "seed": seed,
        "defaults": {
            "readout_error": {"base": 0.03, "jitter": 0.03 * jitter},
            "t2": {"base": 70.0, "jitter": 70.0 * jitter},
            "cnot_error": {"base": 0.015, "jitter": 0.015 * jitter},
            "cnot_length": {"base": 400.0, "jitter": 400.0 * jitter},
        },
    }
    from datetime import datetime, timedelta, timezone

    model["end"] = (datetime(2020, 1, 1, tzinfo=timezone.utc) + timedelta(days=days)).isoformat(sep=" ")
    model.update(extra)
    path = tmp_path / name
    path.write_text(json.dumps(model))
    return path


def readout_model(tmp_path, pairs, registers=2, shots=8192, seed=1, name="ro_model.json", **extra):
    model = {"kind": "readout", "registers": registers, "shots": shots, "seed": seed,
             "pairs": [{"pair": list(p), "probabilities": list(q)} for p, q in pairs.items()], **extra}
    path = tmp_path / name
    path.write_text(json.dumps(model))
    return path


@pytest.fixture
def cal_csv(tmp_path, capsys):
    code, _, _ = run(capsys, "synth", "--input", calibration_model(tmp_path), "--out", tmp_path / "syn")
    assert code == 0
    return tmp_path / "syn" / "calibration.csv"


# -- synth -------------------------------------------------------------------


def test_synth_calibration(cal_csv):
    recs = parse_calibration_file(cal_csv, load_topology("yorktown"))
    assert len(recs) == 200
    meta = json.loads((cal_csv.parent / "synth_meta.json").read_text())
    assert meta["seed"] == 3 and meta["records"] == 200


def test_synth_zero_jitter_is_constant(tmp_path, capsys):
    code, _, _ = run(capsys, "synth", "--input", calibration_model(tmp_path, jitter=0.0), "--out", tmp_path / "z")
    assert code == 0
    recs = parse_calibration_file(tmp_path / "z" / "calibration.csv", load_topology("yorktown"))
    assert {r.cnot_error[(1, 2)] for r in recs} == {0.015}


def test_synth_seed_flag_overrides(tmp_path, capsys):
    model = calibration_model(tmp_path, days=10)
    run(capsys, "synth", "--input", model, "--out", tmp_path / "a")
    run(capsys, "synth", "--input", model, "--out", tmp_path / "b", "--seed", 99)
    a = (tmp_path / "a" / "calibration.csv").read_bytes()
    assert a != (tmp_path / "b" / "calibration.csv").read_bytes()
    assert json.loads((tmp_path / "b" / "synth_meta.json").read_text())["seed"] == 99


def test_synth_bell_readout(tmp_path, capsys):
    code, _, _ = run(capsys, "synth", "--input", readout_model(tmp_path, {(0, 1): (0.5, 0, 0, 0.5)}),
                     "--out", tmp_path / "r")
    assert code == 0
    m = parse_readout_file(tmp_path / "r" / "readout.csv")
    assert m.shots == 8192
    assert np.array_equal(m.bits[:, 0], m.bits[:, 1])
    assert m.metadata["seed"] == "1"


def test_synth_json_calibration(tmp_path, capsys):
    code, _, _ = run(capsys, "synth", "--input", calibration_model(tmp_path, days=5), "--format", "json",
                     "--out", tmp_path / "j")
    assert code == 0
    assert len(parse_calibration_file(tmp_path / "j" / "calibration.json", load_topology("yorktown"))) == 5


def test_synth_unknown_kind(tmp_path, capsys):
    bad = tmp_path / "m.json"
    bad.write_text(json.dumps({"kind": "weather"}))
    code, _, err = run(capsys, "synth", "--input", bad, "--out", tmp_path / "o")
    assert code == 1 and "weather" in err


# -- metrics -----------------------------------------------------------------


def test_metrics_init_fidelity(cal_csv, tmp_path, capsys):
    code, _, _ = run(capsys, "metrics", "--input", cal_csv, "--metric", "InitFidelity", "--out", tmp_path / "m")
    assert code == 0
    files = sorted(p.name for p in (tmp_path / "m").glob("init_fidelity_*.csv"))
    assert files == [f"init_fidelity_{q}.csv" for q in range(5)]
    s = parse_series_file(tmp_path / "m" / "init_fidelity_2.csv")
    recs = parse_calibration_file(cal_csv, load_topology("yorktown"))
    assert s.values.tolist() == [1 - r.readout_error[2] for r in recs]
    cfg = json.loads((tmp_path / "m" / "config.json").read_text())
    assert cfg["metric"] == "InitFidelity" and cfg["window"] == "90d"


def test_metrics_json_round_trip(cal_csv, tmp_path, capsys):
    run(capsys, "metrics", "--input", cal_csv, "--metric", "gate_fidelity", "--location", "0-1",
        "--format", "json", "--out", tmp_path / "m")
    s = parse_series_file(tmp_path / "m" / "gate_fidelity_0-1.json")
    assert s.kind == MetricKind.GATE_FIDELITY and len(s) == 200


def test_metrics_duty_cycle_partial_coverage(tmp_path, capsys):
    topo = load_topology("yorktown")
    from devstab.synth import DriftModel, ParameterDrift, generate_calibration
    from datetime import datetime, timedelta, timezone

    t0 = datetime(2020, 1, 1, tzinfo=timezone.utc)
    model = DriftModel.uniform(topo)
    for e in topo.sorted_edges():
        model = model.replace("cnot_length", e, ParameterDrift(400.0, available_from=t0 + timedelta(days=4)))
    path = write_calibration_file(tmp_path / "c.csv", generate_calibration(model, topo, t0, t0 + timedelta(days=10)), topo)
    code, _, err = run(capsys, "metrics", "--input", path, "--metric", "duty_cycle", "--location", "1-2",
                       "--out", tmp_path / "m")
    assert code == 0
    assert "6 of 10" in err
    assert len(parse_series_file(tmp_path / "m" / "duty_cycle_1-2.csv")) == 6


def test_missing_input_names_path(tmp_path, capsys):
    missing = tmp_path / "nowhere.csv"
    code, out, err = run(capsys, "metrics", "--input", missing, "--out", tmp_path / "m")
    assert code == 1 and str(missing) in err and out == ""


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("last_update_date,q0_readout_err\nyesterday,0.1\n")
    code, _, err = run(capsys, "metrics", "--input", bad, "--topology", "yorktown", "--out", tmp_path / "m")
    assert code == 1 and "row 0" in err


def test_bad_flag_exit_code(capsys):
    code, _, _ = run(capsys, "metrics", "--format", "xml")
    assert code == 1


def test_internal_error_exit_code(monkeypatch, capsys, tmp_path):
    def boom(cfg):
        raise RuntimeError("kaput")

    monkeypatch.setitem(cli.COMMANDS, "metrics", boom)
    code, _, err = run(capsys, "metrics", "--out", tmp_path)
    assert code == 2 and "kaput" in err


def test_config_precedence(cal_csv, tmp_path, capsys):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"window": "60d", "lag": "20d", "metric": "t2"}))
    run(capsys, "metrics", "--config", conf, "--input", cal_csv, "--lag", "10d", "--out", tmp_path / "m")
    cfg = json.loads((tmp_path / "m" / "config.json").read_text())
    assert (cfg["window"], cfg["lag"], cfg["metric"]) == ("60d", "10d", "t2")


# -- temporal ----------------------------------------------------------------


def test_temporal_constant_series(tmp_path, capsys):
    code, _, _ = run(capsys, "synth", "--input", calibration_model(tmp_path, jitter=0.0, days=300),
                     "--out", tmp_path / "s")
    code, out, _ = run(capsys, "temporal", "--input", tmp_path / "s" / "calibration.csv", "--metric", "gate_fidelity",
                       "--location", "0-1", "--out", tmp_path / "t")
    assert code == 0 and out.strip() == "median=0.0"
    rows = (tmp_path / "t" / "temporal.csv").read_text().splitlines()
    assert rows[0] == "timestamp,hellinger" and {r.split(",")[1] for r in rows[1:]} == {"0.0"}
    summary = json.loads((tmp_path / "t" / "temporal_summary.json").read_text())
    assert summary["mode"] == "sliding" and summary["offset"] == "90d"


def test_temporal_step_spike(tmp_path, capsys):
    steps = {"steps": [["2020-07-01 00:00:00+00:00", 0.03]]}
    model = calibration_model(tmp_path, days=400)
    d = json.loads(model.read_text())
    d["parameters"] = [{"field": "cnot_error", "location": [0, 1], "base": 0.015, "jitter": 0.00075, **steps}]
    model.write_text(json.dumps(d))
    run(capsys, "synth", "--input", model, "--out", tmp_path / "s")
    code, _, _ = run(capsys, "temporal", "--input", tmp_path / "s" / "calibration.csv", "--metric", "gate_fidelity",
                     "--location", "0-1", "--out", tmp_path / "t", "--format", "json")
    assert code == 0
    points = json.loads((tmp_path / "t" / "temporal.json").read_text())["points"]
    peak_time, peak = max(points, key=lambda p: p[1])
    assert peak > 0.9 and peak_time > "2020-07-01"
    assert max(h for t, h in points if t <= "2020-07-01") < 0.5
    assert json.loads((tmp_path / "t" / "temporal_summary.json").read_text())["max"] == peak


def test_temporal_origin_mode(cal_csv, tmp_path, capsys):
    code, _, _ = run(capsys, "temporal", "--input", cal_csv, "--metric", "t2", "--location", "3",
                     "--reference", "origin", "--window", "30d", "--out", tmp_path / "t")
    assert code == 0
    summary = json.loads((tmp_path / "t" / "temporal_summary.json").read_text())
    assert summary["mode"] == "origin" and summary["reference"] == START
    first = (tmp_path / "t" / "temporal.csv").read_text().splitlines()[1]
    assert first == "2020-01-31 00:00:00+00:00,0.0"


def test_temporal_needs_single_location(cal_csv, tmp_path, capsys):
    code, _, err = run(capsys, "temporal", "--input", cal_csv, "--out", tmp_path / "t")
    assert code == 1 and "location" in err


# -- spatial -----------------------------------------------------------------


def test_spatial_identical_series(tmp_path, capsys):
    from datetime import datetime, timedelta, timezone

    t0 = datetime(2020, 1, 1, tzinfo=timezone.utc)
    pts = tuple((t0 + timedelta(days=k), 0.9 + 0.001 * (k % 7)) for k in range(40))
    a = write_series_file(tmp_path / "a.csv", MetricSeries(MetricKind.INIT_FIDELITY, 0, "d", pts))
    b = write_series_file(tmp_path / "b.csv", MetricSeries(MetricKind.INIT_FIDELITY, 1, "d", pts))
    code, _, _ = run(capsys, "spatial", "--input", a, "--input", b, "--out", tmp_path / "s")
    assert code == 0
    dm = parse_distance_matrix(tmp_path / "s" / "spatial.csv")
    assert dm.labels == ("0", "1") and dm.values.tolist() == [[0.0, 0.0], [0.0, 0.0]]
    assert parse_distance_matrix(tmp_path / "s" / "spatial.json") == dm


def test_spatial_from_calibration(cal_csv, tmp_path, capsys):
    code, _, _ = run(capsys, "spatial", "--input", cal_csv, "--metric", "gate_fidelity", "--out", tmp_path / "s")
    assert code == 0
    dm = parse_distance_matrix(tmp_path / "s" / "spatial.csv")
    assert dm.labels == ("0-1", "0-2", "1-2", "2-3", "2-4", "3-4")


def test_spatial_addressability_pairs(tmp_path, capsys):
    model = readout_model(tmp_path, {(0, 1): (0.5, 0, 0, 0.5)}, registers=5, shots=4000, default_error=0.5)
    run(capsys, "synth", "--input", model, "--out", tmp_path / "r")
    code, _, _ = run(capsys, "spatial", "--input", tmp_path / "r" / "readout.csv", "--metric", "addressability",
                     "--out", tmp_path / "s")
    assert code == 0
    assert len(parse_distance_matrix(tmp_path / "s" / "spatial.csv").labels) == 10


# -- interdevice -------------------------------------------------------------


def test_interdevice_needs_two(cal_csv, tmp_path, capsys):
    code, _, err = run(capsys, "interdevice", "--input", f"york={cal_csv}", "--out", tmp_path / "i")
    assert code == 1 and "two" in err


def test_interdevice_duplicate_file(cal_csv, tmp_path, capsys):
    code, _, _ = run(capsys, "interdevice", "--input", f"a={cal_csv}", "--input", f"b={cal_csv}",
                     "--metric", "gate_fidelity", "--out", tmp_path / "i")
    assert code == 0
    dm = parse_distance_matrix(tmp_path / "i" / "interdevice.csv")
    assert dm.labels == ("a", "b") and dm["a", "b"] == 0.0


def test_interdevice_five_devices(tmp_path, capsys):
    inputs = []
    for k, name in enumerate(["yorktown", "bogota", "rochester", "paris", "athens"]):
        model = calibration_model(tmp_path, seed=k, days=60, name=f"{name}.json")
        d = json.loads(model.read_text())
        d["defaults"]["cnot_error"]["base"] = 0.01 + 0.004 * k
        model.write_text(json.dumps(d))
        run(capsys, "synth", "--input", model, "--out", tmp_path / name)
        inputs += ["--input", f"{name}={tmp_path / name / 'calibration.csv'}"]
    code, _, _ = run(capsys, "interdevice", *inputs, "--metric", "gate_fidelity", "--location", "0-1",
                     "--out", tmp_path / "i")
    assert code == 0
    dm = parse_distance_matrix(tmp_path / "i" / "interdevice.json")
    assert dm.values.shape == (5, 5)
    assert dm["yorktown", "athens"] > 0.9


# -- addressability ----------------------------------------------------------


def test_addressability_edges_on_toronto(tmp_path, capsys):
    model = readout_model(tmp_path, {}, registers=27, shots=2500, default_error=0.05)
    run(capsys, "synth", "--input", model, "--out", tmp_path / "r")
    code, out, _ = run(capsys, "addressability", "--input", tmp_path / "r" / "readout.csv", "--topology", "toronto",
                       "--pairs", "edges", "--out", tmp_path / "a")
    assert code == 0
    seg = json.loads((tmp_path / "a" / "segmentation.json").read_text())
    assert seg == {"shots": 2500, "window": 1000, "windows": 2, "dropped": 500, "pairs": 28,
                   "prepared_state": "AllZeros"}
    assert len(list((tmp_path / "a" / "series").iterdir())) == 28


def test_addressability_all_pairs(tmp_path, capsys):
    model = readout_model(tmp_path, {}, registers=27, shots=1000, default_error=0.05)
    run(capsys, "synth", "--input", model, "--out", tmp_path / "r")
    code, _, _ = run(capsys, "addressability", "--input", tmp_path / "r" / "readout.csv", "--out", tmp_path / "a")
    assert code == 0
    assert len((tmp_path / "a" / "pairs.csv").read_text().splitlines()) == 352


def test_addressability_bell_vs_independent(tmp_path, capsys):
    model = readout_model(tmp_path, {(0, 1): (0.5, 0, 0, 0.5), (2, 3): (0.25, 0.25, 0.25, 0.25)}, registers=4)
    run(capsys, "synth", "--input", model, "--out", tmp_path / "r")
    code, _, _ = run(capsys, "addressability", "--input", tmp_path / "r" / "readout.csv",
                     "--location", "0-1", "--location", "2-3", "--out", tmp_path / "a")
    assert code == 0
    rows = {r.split(",")[0]: float(r.split(",")[2]) for r in (tmp_path / "a" / "pairs.csv").read_text().splitlines()[1:]}
    assert rows["0-1"] == pytest.approx(0.0, abs=1e-12) and rows["2-3"] > 0.95


def test_addressability_window_too_large(tmp_path, capsys):
    run(capsys, "synth", "--input", readout_model(tmp_path, {}, shots=500), "--out", tmp_path / "r")
    code, _, err = run(capsys, "addressability", "--input", tmp_path / "r" / "readout.csv", "--out", tmp_path / "a")
    assert code == 1 and "500 shots" in err


# -- determinism -------------------------------------------------------------


def test_rerun_is_byte_identical(cal_csv, tmp_path, capsys):
    argv = ["spatial", "--input", cal_csv, "--metric", "t2", "--out", tmp_path / "s"]
    run(capsys, *argv)
    first = snapshot(tmp_path / "s")
    shutil.rmtree(tmp_path / "s")
    run(capsys, *argv)
    assert snapshot(tmp_path / "s") == first
