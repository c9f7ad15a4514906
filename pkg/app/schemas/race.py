from pydantic import BaseModel, Field, model_validator
from typing import List, Literal, Optional

from app.schemas.camera import CameraMount, FisheyeIntrinsics
from app.schemas.controller import ControllerConfig
from app.schemas.filters import DriftFilterConfig, EkfConfig
from app.schemas.quad import QuadParams
from app.schemas.sensors import DriftModel, ImuNoiseConfig, SensorRates
from app.schemas.trajectory import TrajectoryConfig
from app.schemas.vision import VisionConfig

RaceMode = Literal["vio", "mocap", "ablate-kf"]


class ArenaBounds(BaseModel):
    """Flight volume, centred on the track origin in x and y."""
    length: float = Field(25.0, gt=0)
    width: float = Field(9.7, gt=0)
    height: float = Field(7.0, gt=0)
    floor: float = Field(0.1, ge=0)                     # m, floor contact below this height

    def contains(self, p) -> bool:
        return (
            abs(p[0]) <= 0.5 * self.length
            and abs(p[1]) <= 0.5 * self.width
            and self.floor <= p[2] <= self.height
        )


class RaceConfig(BaseModel):
    """Everything one simulated race needs; nested configs default to nominal values."""
    track: str = "track_ratm"
    trajectory_file: Optional[str] = None
    seed: int = 0
    laps: int = Field(3, ge=1, le=100)
    mode: RaceMode = "vio"
    label: Optional[str] = None
    quad: QuadParams = Field(default_factory=QuadParams)
    camera: Optional[FisheyeIntrinsics] = None
    mount: CameraMount = Field(default_factory=CameraMount)
    imu: ImuNoiseConfig = Field(default_factory=ImuNoiseConfig)
    drift: DriftModel = Field(default_factory=DriftModel)
    vision: VisionConfig = Field(default_factory=VisionConfig)
    drift_filter: DriftFilterConfig = Field(default_factory=DriftFilterConfig)
    ekf: EkfConfig = Field(default_factory=EkfConfig)
    controller: ControllerConfig = Field(default_factory=ControllerConfig)
    trajectory: TrajectoryConfig = Field(default_factory=TrajectoryConfig)
    rates: SensorRates = Field(default_factory=SensorRates)
    arena: ArenaBounds = Field(default_factory=ArenaBounds)
    mocap_sigma: float = Field(0.001, ge=0)             # m
    lap_timeout: float = Field(120.0, gt=0)             # s
    miss_grace: float = Field(1.0, ge=0)                # s past the reference gate time

    @model_validator(mode="after")
    def rates_divide_physics(self):
        physics = self.rates.physics
        for name in ("imu", "vio", "control"):
            rate = getattr(self.rates, name)
            if physics % rate:
                raise ValueError(f"{name} rate {rate} Hz does not divide the physics rate {physics} Hz")
        for name in ("camera", "mocap"):
            if getattr(self.rates, name) > physics:
                raise ValueError(f"{name} rate exceeds the physics rate")
        if 1.0 / physics > 0.002:
            raise ValueError("physics rate must be at least 500 Hz")
        return self

    @property
    def run_label(self) -> str:
        return self.label or self.mode


class RaceRequest(BaseModel):
    track: str = "track_ratm"
    mode: RaceMode = "mocap"
    seed: int = 0
    laps: int = Field(1, ge=1, le=10)


class LapRecordOut(BaseModel):
    run: str = "run"
    lap: int
    lap_time: Optional[float] = None
    top_speed: float
    path_length: float
    avg_speed: Optional[float] = None
    gate_misses: int = 0
    crashed: bool = False
    timed_out: bool = False
    sector_times: List[float] = Field(default_factory=list)


class SummaryRow(BaseModel):
    run: str
    laps: int
    runs: int
    laps_per_run: float
    crashes: int
    lap_time_avg: Optional[float] = None
    lap_time_std: Optional[float] = None
    lap_time_min: Optional[float] = None
    lap_time_max: Optional[float] = None
    top_speed_avg: Optional[float] = None
    top_speed_std: Optional[float] = None
    top_speed_min: Optional[float] = None
    top_speed_max: Optional[float] = None
    path_length_avg: Optional[float] = None
    path_length_std: Optional[float] = None
    path_length_min: Optional[float] = None
    path_length_max: Optional[float] = None


class RaceResponse(BaseModel):
    track: str
    mode: RaceMode
    seed: int
    laps: List[LapRecordOut]
    summary: List[SummaryRow]
    crashed: bool


class AnalysisRequest(BaseModel):
    laps: List[LapRecordOut] = Field(..., min_length=1)
