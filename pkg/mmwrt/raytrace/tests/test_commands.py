import csv
import io
import json
import math

import pytest
from django.core.management import CommandError, call_command, execute_from_command_line

from raytrace import outputs
from raytrace.exceptions import ConfigError
from raytrace.management.commands.sweep import COLUMNS as SWEEP_COLUMNS
from raytrace.management.commands.sweep import parse_grid
from raytrace.schemas import SimplificationSetting
from raytrace.tracefile import read_trace


def trace(scenario, out, **options):
    call_command("trace", scenario=str(scenario), out=str(out), stdout=io.StringIO(), **options)
    return out


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


# ----- trace -----
def test_trace_writes_outputs(moving_box, tmp_path):
    out = trace(moving_box(steps=4, R=1), tmp_path / "run", emit_counters=True)
    for name in (outputs.TRACE_FILE, outputs.LINKS_FILE, outputs.COUNTERS_FILE, outputs.MANIFEST_FILE):
        assert (out / name).exists()

    manifest = json.loads((out / outputs.MANIFEST_FILE).read_text(encoding="utf-8"))
    assert manifest["command"] == "trace"
    assert manifest["instances"] == 4
    assert manifest["triangles"] == 12

    with open(out / outputs.TRACE_FILE, encoding="utf-8") as fh:
        parsed = read_trace(fh)
    assert parsed.digest == manifest["config_digest"]
    assert len(parsed.instances) == 4
    assert sum(len(i.mpcs) for i in parsed.instances) == manifest["mpcs"]
    assert len(read_rows(out / outputs.LINKS_FILE)) == 4
    assert len(read_rows(out / outputs.COUNTERS_FILE)) == 4


def test_trace_is_byte_identical(moving_box, tmp_path):
    scenario = moving_box(steps=3, R=2, qd="true")
    first = trace(scenario, tmp_path / "a", seed=11)
    second = trace(scenario, tmp_path / "b", seed=11)
    for name in (outputs.TRACE_FILE, outputs.LINKS_FILE):
        assert (first / name).read_bytes() == (second / name).read_bytes()


@pytest.mark.slow
def test_indoor_trace_is_identical_across_jobs(settings, tmp_path):
    scenario = settings.SCENARIO_DIR / "indoor1.toml"
    serial = trace(scenario, tmp_path / "serial", steps=200, qd="on", jobs=1)
    parallel = trace(scenario, tmp_path / "parallel", steps=200, qd="on", jobs=2)
    for name in (outputs.TRACE_FILE, outputs.LINKS_FILE):
        assert (serial / name).read_bytes() == (parallel / name).read_bytes()


def test_trace_overrides(moving_box, tmp_path):
    out = trace(moving_box(steps=2, R=2), tmp_path / "run", max_reflection_order=1, rel_threshold_db="-inf",
                qd="on", steps=1)
    manifest = json.loads((out / outputs.MANIFEST_FILE).read_text(encoding="utf-8"))
    assert manifest["steps"] == 1
    assert manifest["scenario"]["qd_enabled"] is True
    assert manifest["scenario"]["simplification"]["max_reflection_order"] == 1


def test_manifest_keeps_minus_infinity(moving_box, tmp_path):
    out = trace(moving_box(steps=1, R=1), tmp_path / "run", rel_threshold_db="-inf")
    manifest = json.loads((out / outputs.MANIFEST_FILE).read_text(encoding="utf-8"))
    assert manifest["scenario"]["simplification"]["rel_threshold_db"] == "-inf"
    restored = outputs.read_manifest(out / outputs.MANIFEST_FILE)
    assert SimplificationSetting.model_validate(restored.scenario["simplification"]).rel_threshold_db == -math.inf


def test_failed_trace_leaves_no_output(moving_box, tmp_path, monkeypatch):
    scenario = moving_box(steps=2, R=1)

    def broken(links, sink):
        sink.write("partial")
        raise ConfigError("disk full")

    monkeypatch.setattr(outputs, "write_links", broken)
    with pytest.raises(CommandError, match="disk full"):
        trace(scenario, tmp_path / "run")
    assert not (tmp_path / "run").exists()
    assert not [p for p in tmp_path.iterdir() if p.name.endswith(".tmp")]


def test_failed_trace_keeps_previous_run(moving_box, tmp_path, monkeypatch):
    scenario = moving_box(steps=2, R=1)
    out = trace(scenario, tmp_path / "run", emit_counters=True)
    before = {name: (out / name).read_bytes() for name in outputs.OUTPUT_FILES}

    def broken(result, sink, include_timing=False):
        raise ConfigError("disk full")

    monkeypatch.setattr(outputs, "write_counters", broken)
    with pytest.raises(CommandError):
        trace(scenario, out, emit_counters=True, seed=99)
    assert {name: (out / name).read_bytes() for name in outputs.OUTPUT_FILES} == before


def test_rerun_drops_stale_counters(moving_box, tmp_path):
    scenario = moving_box(steps=2, R=1)
    out = trace(scenario, tmp_path / "run", emit_counters=True)
    trace(scenario, out)
    assert not (out / outputs.COUNTERS_FILE).exists()
    assert (out / outputs.TRACE_FILE).exists()
    assert not [p for p in tmp_path.iterdir() if p.name.endswith(".tmp")]


def test_trace_bad_scenario(tmp_path):
    with pytest.raises(CommandError):
        trace(tmp_path / "missing.toml", tmp_path / "run")
    assert not (tmp_path / "run").exists()


def test_command_line_errors(moving_box, tmp_path):
    with pytest.raises(SystemExit) as exc:
        execute_from_command_line(["manage.py", "trace", "--bogus"])
    assert exc.value.code == 2

    with pytest.raises(SystemExit) as exc:
        execute_from_command_line(["manage.py", "trace", "--out", str(tmp_path / "x")])
    assert exc.value.code == 2

    with pytest.raises(SystemExit) as exc:
        execute_from_command_line(["manage.py", "trace", "--scenario", str(tmp_path / "nope.toml"),
                                   "--out", str(tmp_path / "x")])
    assert exc.value.code == 1
    assert not (tmp_path / "x").exists()


# ----- compare -----
def test_compare(moving_box, tmp_path):
    scenario = moving_box(steps=6, R=2)
    baseline = trace(scenario, tmp_path / "base")
    simplified = trace(scenario, tmp_path / "simp", max_reflection_order=1, rel_threshold_db=-15.0)
    report = tmp_path / "report.csv"
    call_command("compare", baseline=str(baseline), simplified=str(simplified), out=str(report),
                 stdout=io.StringIO())

    assert report.read_text(encoding="utf-8").startswith("# population std")
    (row,) = read_rows(report)
    assert row["rx_id"] == "ue"
    assert row["metric"] == "sinr"
    assert float(row["nrmse"]) >= 0.0
    assert int(row["rays_simplified"]) < int(row["rays_baseline"])
    assert float(row["ops_speedup"]) > 1.0


def test_compare_against_itself(moving_box, tmp_path):
    run = trace(moving_box(steps=6, R=1), tmp_path / "run")
    report = tmp_path / "report.csv"
    call_command("compare", baseline=str(run), simplified=str(run), out=str(report), metric="snr",
                 stdout=io.StringIO())
    (row,) = read_rows(report)
    assert float(row["nrmse"]) == 0.0
    assert float(row["mean_diff"]) == 0.0


def test_compare_grid_mismatch(moving_box, tmp_path):
    scenario = moving_box(steps=6, R=1)
    baseline = trace(scenario, tmp_path / "base")
    shorter = trace(scenario, tmp_path / "short", steps=4)
    with pytest.raises(CommandError, match="time grids differ"):
        call_command("compare", baseline=str(baseline), simplified=str(shorter),
                     out=str(tmp_path / "report.csv"), stdout=io.StringIO())
    assert not (tmp_path / "report.csv").exists()


def test_compare_corrupted_trace(moving_box, tmp_path):
    run = trace(moving_box(steps=2, R=1), tmp_path / "run")
    with open(run / outputs.TRACE_FILE, "ab") as fh:
        fh.write(b"\xff\xfe\n")
    with pytest.raises(CommandError, match="UTF-8"):
        call_command("compare", baseline=str(run), simplified=str(run), out=str(tmp_path / "report.csv"),
                     stdout=io.StringIO())


def test_scenario_encoding_error_exits_with_one_line(tmp_path, capsys):
    scenario = tmp_path / "broken.toml"
    scenario.write_bytes(b'name = "\xff"\n')
    with pytest.raises(SystemExit) as exc:
        execute_from_command_line(["manage.py", "trace", "--scenario", str(scenario),
                                   "--out", str(tmp_path / "x")])
    assert exc.value.code == 1
    assert "Traceback" not in capsys.readouterr().err


# ----- sweep -----
def test_parse_grid():
    assert parse_grid("R=1..4,gamma=-inf,-40,-25,-15") == ([1, 2, 3, 4], [-math.inf, -40.0, -25.0, -15.0])
    assert parse_grid("R=2,gamma=-10") == ([2], [-10.0])


@pytest.mark.parametrize("grid", ["R=1..2", "gamma=-10", "X=1,gamma=-10", "R=,gamma=-1"])
def test_parse_grid_errors(grid):
    with pytest.raises(ConfigError):
        parse_grid(grid)


def test_sweep(moving_box, tmp_path):
    out = tmp_path / "sweep"
    call_command("sweep", scenario=str(moving_box(steps=6, R=1)), grid="R=1..2,gamma=-inf,-20", out=str(out),
                 stdout=io.StringIO())
    rows = read_rows(out / "sweep.csv")
    assert list(rows[0]) == SWEEP_COLUMNS
    assert [(int(r["R"]), float(r["gamma_th_db"])) for r in rows] == [
        (1, -math.inf), (1, -20.0), (2, -math.inf), (2, -20.0),
    ]
    # R = 2 без порога совпадает с базовым прогоном
    assert float(rows[2]["nrmse"]) == 0.0
    assert rows[2]["acceptable"] == "True"
    assert int(rows[2]["rays_simplified"]) == int(rows[2]["rays_baseline"])


@pytest.mark.slow
def test_sweep_cells_beat_baseline(moving_box, settings, tmp_path):
    # только время трассировки и одна оценка линий: иначе разницу съедает T_ns
    settings.MMWRT = {**settings.MMWRT, "NS_REPETITIONS": 1}
    out = tmp_path / "sweep"
    call_command("sweep", scenario=str(moving_box(steps=4, R=4)), grid="R=1..3,gamma=-inf,-15", out=str(out),
                 stdout=io.StringIO())
    rows = read_rows(out / "sweep.csv")
    assert [(int(r["R"]), float(r["gamma_th_db"])) for r in rows] == [
        (R, gamma) for R in (1, 2, 3) for gamma in (-math.inf, -15.0)
    ]
    for row in rows:
        assert float(row["speedup"]) > 1.0
        assert float(row["ops_speedup"]) > 1.0


# ----- qd_stats -----
def test_qd_stats(tmp_path):
    out = tmp_path / "qd.csv"
    call_command("qd_stats", samples=1000, pin=True, seed=3, out=str(out), stdout=io.StringIO(),
                 stderr=io.StringIO())
    rows = read_rows(out)
    assert [r["name"] for r in rows] == ["inter_arrival_mean_s", "decay_slope_db_per_s", "angle_std_rad",
                                         "phase_ks"]
    decay = rows[1]
    assert float(decay["empirical"]) == pytest.approx(float(decay["analytic"]), rel=1e-6)


def test_qd_stats_to_stdout():
    buffer = io.StringIO()
    call_command("qd_stats", samples=1000, pin=True, stdout=buffer, stderr=io.StringIO())
    assert buffer.getvalue().splitlines()[0] == "name,empirical,analytic,tolerance,passed"


def test_qd_stats_needs_enough_samples():
    with pytest.raises(CommandError, match="at least 1000"):
        call_command("qd_stats", samples=10, stdout=io.StringIO())


def test_qd_stats_unknown_material():
    with pytest.raises(CommandError):
        call_command("qd_stats", samples=1000, material=99, stdout=io.StringIO())
