from pydantic import BaseModel, Field
from typing import List, Optional


class TrajectoryConfig(BaseModel):
    twr_gen: float = Field(3.8, gt=1.0)
    dt: float = Field(0.01, gt=0, le=0.1)               # s, sample spacing of the reference
    pre_offset: float = Field(0.4, ge=0)                # m
    post_offset: float = Field(0.4, ge=0)               # m
    split_s_post_offset: float = Field(1.25, ge=0)      # m
    accel_margin: float = Field(0.95, gt=0, le=1)       # peak thrust acceleration / (TWR g)
    tolerance: float = Field(0.005, gt=0, lt=0.05)      # relative, on the peak
    yaw_rate_limit: float = Field(6.0, gt=0)            # rad/s
    samples_per_segment: int = Field(64, ge=8)
    run_out: float = Field(3.0, ge=0)                   # m past the last gate of an open race trajectory


class WaypointOut(BaseModel):
    gate_id: str
    side: str
    position: List[float]


class TrajectoryRequest(BaseModel):
    track: str
    twr_gen: float = Field(3.8, gt=1.0)
    dt: float = Field(0.01, gt=0, le=0.1)
    closed: bool = True


class TrajectorySummary(BaseModel):
    track: str
    closed: bool
    lap_time: float
    samples: int
    peak_thrust_accel: float
    thrust_accel_cap: float
    time_scale: Optional[float] = None
