import math
from dataclasses import dataclass, field
from typing import List, Optional

import pandas as pd


@dataclass
class SectorTime:
    lap: int
    from_gate: str
    to_gate: str
    time: float


@dataclass
class LapRecord:
    lap: int
    lap_time: float
    top_speed: float
    path_length: float
    sector_times: List[float] = field(default_factory=list)
    gate_misses: int = 0
    crashed: bool = False
    timed_out: bool = False
    run: str = "run"

    @property
    def completed(self) -> bool:
        return not (self.crashed or self.timed_out) and math.isfinite(self.lap_time)

    @property
    def avg_speed(self) -> float:
        if not self.completed or self.lap_time <= 0.0:
            return float("nan")
        return self.path_length / self.lap_time


@dataclass
class RaceResult:
    laps: List[LapRecord]
    sectors: List[SectorTime]
    state_log: pd.DataFrame
    est_log: pd.DataFrame
    events: pd.DataFrame
    telemetry: pd.DataFrame
    crashed: bool = False
    crash_reason: Optional[str] = None
    tracking_rmse: float = float("nan")
