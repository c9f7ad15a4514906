import math

import numpy as np
import pandas as pd
import pytest
from scipy.integrate import quad

from app.exceptions import NoLaps, ParseError
from app.models.race import LapRecord, SectorTime
from app.models.trajectory import ReferenceTrajectory
from app.schemas.track import Gate, GateMap
from app.services import analysis


def lap_table(times, run="vio", crashed=None):
    crashed = crashed or [False] * len(times)
    laps = [
        LapRecord(i + 1, t, 10.0 + i, 50.0, gate_misses=0, crashed=c, run=run)
        for i, (t, c) in enumerate(zip(times, crashed))
    ]
    return analysis.laps_frame(laps)


def test_two_laps_mean_and_population_std():
    summary = analysis.summarize(lap_table([5.0, 6.0]))
    row = summary.iloc[0]
    assert row["laps"] == 2
    assert row["lap_time_avg"] == pytest.approx(5.5)
    assert row["lap_time_std"] == pytest.approx(0.5)
    assert row["lap_time_min"] == 5.0 and row["lap_time_max"] == 6.0
    assert row["top_speed_max"] == pytest.approx(11.0)


def test_single_lap_has_zero_std():
    row = analysis.summarize(lap_table([5.0])).iloc[0]
    assert row["lap_time_std"] == 0.0


def test_crashed_laps_excluded_but_counted():
    df = lap_table([5.0, float("nan")], crashed=[False, True])
    row = analysis.summarize(df).iloc[0]
    assert row["laps"] == 1
    assert row["crashes"] == 1
    assert row["lap_time_avg"] == pytest.approx(5.0)


def test_runs_are_summarized_separately():
    df = pd.concat([lap_table([5.0, 6.0], run="vio"), lap_table([4.0], run="mocap")], ignore_index=True)
    summary = analysis.summarize(df)
    assert list(summary["run"]) == ["mocap", "vio"]
    assert list(summary["laps"]) == [1, 2]


def test_empty_table_has_no_laps():
    with pytest.raises(NoLaps):
        analysis.summarize(analysis.laps_frame([]))


def test_only_crashes_has_no_laps():
    with pytest.raises(NoLaps):
        analysis.summarize(lap_table([float("nan")], crashed=[True]))


def test_format_summary_renders_missing_values():
    df = pd.concat([
        lap_table([5.0], run="vio"),
        lap_table([float("nan")], run="ablate", crashed=[True]),
    ], ignore_index=True)
    text = analysis.format_summary(analysis.summarize(df))
    assert "Lap avg (s)" in text
    assert "5.000" in text
    assert " -" in text


def test_sector_tables():
    sectors = [
        SectorTime(1, "G1", "G2", 2.0), SectorTime(1, "G2", "G1", 3.0),
        SectorTime(2, "G1", "G2", 4.0), SectorTime(2, "G2", "G1", 3.0),
    ]
    frame = analysis.sectors_frame(sectors)
    assert list(frame["sector"]) == [1, 2, 1, 2]
    table = analysis.sector_summary(frame)
    first = table[(table["from_gate"] == "G1") & (table["to_gate"] == "G2")].iloc[0]
    assert first["count"] == 2
    assert first["mean"] == pytest.approx(3.0)
    assert first["std"] == pytest.approx(1.0)


def test_estimation_error_per_axis():
    t = np.arange(5) * 0.01
    truth = pd.DataFrame({
        "t": t, "px": t, "py": 0.0, "pz": 2.0, "vx": 1.0, "vy": 0.0, "vz": 0.0,
    })
    est = truth.copy()
    est["px"] += 0.1
    est["vz"] -= 0.2
    err = analysis.estimation_error(truth, est).set_index(["quantity", "axis"])
    assert err.loc[("position", "x"), "rmse"] == pytest.approx(0.1)
    assert err.loc[("position", "y"), "rmse"] == 0.0
    assert err.loc[("velocity", "z"), "max"] == pytest.approx(0.2)


@pytest.fixture
def loop_map():
    return GateMap(name="loop", gates=[
        Gate(id="G1", center=[0.0, 0.0, 2.0], yaw_rad=0.0),
        Gate(id="G2", center=[5.0, 5.0, 2.0], yaw_rad=math.pi),
    ])


def loop_log():
    rows = [
        (0.0, -1.0, 0.0), (1.0, 1.0, 0.0), (2.0, 6.0, 3.0), (3.0, 6.0, 5.0),
        (4.0, 4.0, 5.0), (5.0, -2.0, 3.0), (6.0, -1.0, 0.0), (7.0, 1.0, 0.0),
    ]
    return pd.DataFrame([(t, x, y, 2.0) for t, x, y in rows], columns=["t", "px", "py", "pz"])


def test_replayed_log_yields_lap_and_sectors(loop_map):
    laps, sectors = analysis.laps_from_positions(loop_log(), loop_map)
    assert len(laps) == 1
    assert laps[0].lap_time == pytest.approx(6.0)
    assert laps[0].sector_times == pytest.approx([3.0, 3.0])
    assert sum(laps[0].sector_times) == pytest.approx(laps[0].lap_time)
    assert [(s.from_gate, s.to_gate) for s in sectors] == [("G1", "G2"), ("G2", "G1")]
    assert laps[0].path_length > 0.0


def test_replay_times_out(loop_map):
    laps, _ = analysis.laps_from_positions(loop_log(), loop_map, lap_timeout=2.0)
    assert len(laps) == 1
    assert laps[0].timed_out and math.isnan(laps[0].lap_time)


def test_replay_requires_positions(loop_map):
    with pytest.raises(ParseError):
        analysis.laps_from_positions(pd.DataFrame({"t": [0.0], "x": [1.0]}), loop_map)


def test_load_runs_counts_flights(tmp_path):
    for name, times in (("a", [5.0, 6.0]), ("b", [5.5])):
        (tmp_path / name).mkdir()
        lap_table(times).to_csv(tmp_path / name / "laps.csv", index=False)
    laps = analysis.load_runs([str(tmp_path / "a"), str(tmp_path / "b")])
    row = analysis.summarize(laps).iloc[0]
    assert row["runs"] == 2
    assert row["laps"] == 3
    assert row["laps_per_run"] == pytest.approx(1.5)


def test_load_run_rejects_foreign_csv(tmp_path):
    path = tmp_path / "other.csv"
    pd.DataFrame({"a": [1]}).to_csv(path, index=False)
    with pytest.raises(ParseError):
        analysis.load_run(str(path))


def test_load_runs_needs_a_directory():
    with pytest.raises(NoLaps):
        analysis.load_runs([])


def test_import_flight_log_writes_lap_tables(tmp_path, loop_map):
    from app.data.import_flight_log import import_flight_log

    track = tmp_path / "loop.json"
    track.write_text(loop_map.model_dump_json())
    log = loop_log().rename(columns={"t": "time", "px": "x", "py": "y", "pz": "z"})
    log.to_csv(tmp_path / "pilot.csv", index=False)

    out = tmp_path / "pilot"
    mapping = {"time": "t", "x": "px", "y": "py", "z": "pz"}
    assert import_flight_log(str(tmp_path / "pilot.csv"), str(track), str(out), mapping)
    laps = analysis.load_run(str(out))
    assert laps["lap_time"].tolist() == pytest.approx([6.0])
    assert laps["run"].tolist() == ["pilot"]
    assert (out / "sectors.csv").is_file()


def test_import_flight_log_reports_missing_columns(tmp_path, loop_map):
    from app.data.import_flight_log import import_flight_log

    loop_log().to_csv(tmp_path / "pilot.csv", index=False)
    assert not import_flight_log(str(tmp_path / "pilot.csv"), "track_ratm", str(tmp_path / "out"), {"px": "east"})


def test_analyze_reports_flight_log_without_time_column(tmp_path, capsys):
    from app.cli import main

    path = tmp_path / "pilot.csv"
    loop_log().drop(columns=["t"]).to_csv(path, index=False)
    assert main(["analyze", "--flight-log", str(path), "--track", "track_ratm"]) == 1
    assert "ParseError" in capsys.readouterr().err


def skewed_loop(dt, lap_time=6.0):
    """Closed curve through G1 (heading +x) and G2 (heading -x) of the loop map."""
    omega = 2.0 * math.pi / lap_time
    t = np.arange(-0.1, lap_time + 0.1, dt)
    theta = omega * t
    x = 3.0 * np.sin(theta) + 2.5 * (1.0 - np.cos(theta))
    y = 2.5 * (1.0 - np.cos(theta))
    return pd.DataFrame({"t": t, "px": x, "py": y, "pz": np.full_like(t, 2.0)})


def test_path_length_converges_with_sampling_rate(loop_map):
    coarse, _ = analysis.laps_from_positions(skewed_loop(1e-3), loop_map)
    fine, _ = analysis.laps_from_positions(skewed_loop(5e-4), loop_map)
    assert len(coarse) == len(fine) == 1
    assert fine[0].path_length == pytest.approx(coarse[0].path_length, rel=1e-3)

    def speed(th):
        return math.hypot(3.0 * math.cos(th) + 2.5 * math.sin(th), 2.5 * math.sin(th))

    arc, _ = quad(speed, 0.0, 2.0 * math.pi, limit=200)
    assert fine[0].path_length == pytest.approx(arc, rel=1e-3)
    assert fine[0].path_length >= 2.0 * math.hypot(5.0, 5.0)


def test_tracking_rmse_against_reference():
    t = np.arange(0.0, 2.0 + 1e-9, 0.01)
    n = len(t)
    p = np.column_stack([3.0 * t, np.zeros(n), np.full(n, 2.0)])
    v = np.tile([3.0, 0.0, 0.0], (n, 1))
    reference = ReferenceTrajectory(t, np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)), p, v)
    times = np.arange(0.005, 1.9, 0.02)
    log = pd.DataFrame({"t": times, "px": 3.0 * times, "py": np.full(len(times), 0.1), "pz": 2.0})
    assert analysis.tracking_rmse(log, reference) == pytest.approx(0.1)
    assert math.isnan(analysis.tracking_rmse(log.iloc[:0], reference))
