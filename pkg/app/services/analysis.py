"""Lap statistics, sector distributions and estimator error reports."""
import logging
import os
from typing import List, Optional

import numpy as np
import pandas as pd

from app.exceptions import NoLaps, ParseError
from app.models.race import LapRecord, SectorTime
from app.models.trajectory import ReferenceTrajectory
from app.schemas.track import GateMap
from app.services.timing import PASS, GateCrossings, LapTimer

logger = logging.getLogger(__name__)

LAP_COLUMNS = [
    "run", "lap", "lap_time", "top_speed", "path_length", "avg_speed", "gate_misses", "crashed", "timed_out",
]
STATS = ["lap_time", "top_speed", "path_length"]


def laps_frame(laps: List[LapRecord]) -> pd.DataFrame:
    rows = [
        [lap.run, lap.lap, lap.lap_time, lap.top_speed, lap.path_length, lap.avg_speed,
         lap.gate_misses, lap.crashed, lap.timed_out]
        for lap in laps
    ]
    return pd.DataFrame(rows, columns=LAP_COLUMNS)


def sectors_frame(sectors: List[SectorTime]) -> pd.DataFrame:
    df = pd.DataFrame(
        [[s.lap, s.from_gate, s.to_gate, s.time] for s in sectors],
        columns=["lap", "from_gate", "to_gate", "time"],
    )
    df.insert(1, "sector", df.groupby("lap").cumcount() + 1 if len(df) else pd.Series(dtype=int))
    return df


def summarize(laps: pd.DataFrame) -> pd.DataFrame:
    """Per-run lap statistics; std is the population standard deviation.

    ``laps`` needs the columns of :data:`LAP_COLUMNS`; an optional ``run_id``
    column counts separate flights within one run label.
    """
    if laps.empty:
        raise NoLaps("no laps recorded")
    laps = laps.copy()
    laps["crashed"] = laps["crashed"].astype(bool)
    laps["timed_out"] = laps.get("timed_out", False)
    completed = laps[~laps["crashed"] & ~laps["timed_out"].astype(bool) & laps["lap_time"].notna()]
    if completed.empty:
        raise NoLaps("no completed laps")

    rows = []
    for run, group in laps.groupby("run", sort=True):
        done = completed[completed["run"] == run]
        runs = int(group["run_id"].nunique()) if "run_id" in group.columns else 1
        row = {
            "run": run,
            "laps": int(len(done)),
            "runs": runs,
            "laps_per_run": len(done) / runs,
            "crashes": int(group["crashed"].sum()),
        }
        for column in STATS:
            values = done[column].to_numpy(dtype=float)
            if len(values):
                row[f"{column}_avg"] = float(np.mean(values))
                row[f"{column}_std"] = float(np.std(values))
                row[f"{column}_min"] = float(np.min(values))
                row[f"{column}_max"] = float(np.max(values))
            else:
                for stat in ("avg", "std", "min", "max"):
                    row[f"{column}_{stat}"] = None
        rows.append(row)
    return pd.DataFrame(rows)


def sector_summary(sectors: pd.DataFrame) -> pd.DataFrame:
    if sectors.empty:
        return pd.DataFrame(columns=["from_gate", "to_gate", "count", "mean", "std", "min", "max"])
    grouped = sectors.groupby(["from_gate", "to_gate"], sort=False)["time"]
    out = grouped.agg(["count", "mean", "min", "max"]).reset_index()
    out.insert(4, "std", grouped.agg(lambda x: float(np.std(x))).to_numpy())
    return out


def format_summary(summary: pd.DataFrame) -> str:
    columns = [
        ("run", "Run", "{}"), ("laps", "Laps", "{:d}"), ("laps_per_run", "Laps/Run", "{:.1f}"),
        ("crashes", "Crashes", "{:d}"),
        ("lap_time_avg", "Lap avg (s)", "{:.3f}"), ("lap_time_std", "Lap std (s)", "{:.3f}"),
        ("lap_time_min", "Lap min (s)", "{:.3f}"), ("lap_time_max", "Lap max (s)", "{:.3f}"),
        ("top_speed_avg", "Top speed avg (m/s)", "{:.2f}"), ("top_speed_max", "Top speed max (m/s)", "{:.2f}"),
        ("path_length_avg", "Path avg (m)", "{:.2f}"),
    ]
    table = pd.DataFrame({
        title: [("-" if pd.isna(v) else fmt.format(v)) for v in summary[key]] for key, title, fmt in columns
    })
    return table.to_string(index=False) + "\n"


def estimation_error(state_log: pd.DataFrame, est_log: pd.DataFrame) -> pd.DataFrame:
    """Per-axis RMSE and maximum of the estimate against truth, paired by time."""
    merged = state_log.merge(est_log, on="t", suffixes=("_true", "_est"))
    rows = []
    for quantity, prefix in (("position", "p"), ("velocity", "v")):
        for axis in "xyz":
            err = merged[f"{prefix}{axis}_est"] - merged[f"{prefix}{axis}_true"]
            rows.append({
                "quantity": quantity, "axis": axis,
                "rmse": float(np.sqrt(np.mean(err ** 2))) if len(err) else float("nan"),
                "max": float(np.max(np.abs(err))) if len(err) else float("nan"),
            })
    return pd.DataFrame(rows)


def tracking_rmse(state_log: pd.DataFrame, reference: ReferenceTrajectory) -> float:
    """Position RMSE of the flown path against the reference at the logged times."""
    if state_log.empty:
        return float("nan")
    flown = state_log[["px", "py", "pz"]].to_numpy(dtype=float)
    err = flown - reference.positions(state_log["t"].to_numpy(dtype=float))
    return float(np.sqrt(np.mean(np.sum(err ** 2, axis=1))))


def laps_from_positions(
    track: pd.DataFrame,
    gate_map: GateMap,
    run: str = "log",
    lap_timeout: Optional[float] = None,
) -> tuple:
    """Replay a position log (columns t, px, py, pz) against a gate map.

    Returns lap records and sector times computed exactly as in a live run.
    """
    required = ["t", "px", "py", "pz"]
    missing = [c for c in required if c not in track.columns]
    if missing:
        raise ParseError(f"flight log is missing columns: {missing}")
    track = track.sort_values("t")
    data = track[required].to_numpy(dtype=float)
    has_velocity = all(c in track.columns for c in ("vx", "vy", "vz"))
    velocity = track[["vx", "vy", "vz"]].to_numpy(dtype=float) if has_velocity else None

    crossings = GateCrossings(gate_map)
    timer = LapTimer(gate_map, run)
    for k in range(1, len(data)):
        t0, t1 = data[k - 1, 0], data[k, 0]
        p0, p1 = data[k - 1, 1:], data[k, 1:]
        step = float(np.linalg.norm(p1 - p0))
        speed = float(np.linalg.norm(velocity[k])) if velocity is not None else step / max(t1 - t0, 1e-9)
        credited = 0.0
        for i, result, s in sorted(crossings.check(p0, p1), key=lambda event: event[2]):
            timer.tick((s - credited) * step, speed)
            credited = s
            if result == PASS:
                timer.gate_passed(gate_map.gates[i].id, t0 + s * (t1 - t0))
            else:
                timer.gate_missed()
        timer.tick((1.0 - credited) * step, speed)
        if lap_timeout is not None and timer.started and t1 - timer.lap_start > lap_timeout:
            timer.abort(crashed=False, timed_out=True)
            break
    return timer.laps, timer.sectors


def load_run(path: str) -> pd.DataFrame:
    """Lap table of a run directory (or a laps CSV file)."""
    laps_path = os.path.join(path, "laps.csv") if os.path.isdir(path) else path
    try:
        laps = pd.read_csv(laps_path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"cannot read laps from {laps_path}: {exc}") from exc
    missing = [c for c in ("run", "lap", "lap_time", "top_speed", "path_length", "crashed") if c not in laps.columns]
    if missing:
        raise ParseError(f"{laps_path} is missing columns: {missing}")
    return laps


def load_runs(paths: List[str]) -> pd.DataFrame:
    """Concatenate several run directories; each directory counts as one flight."""
    frames = []
    for i, path in enumerate(paths):
        laps = load_run(path)
        laps["run_id"] = i
        frames.append(laps)
    if not frames:
        raise NoLaps("no run directories given")
    return pd.concat(frames, ignore_index=True)
