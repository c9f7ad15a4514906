from pydantic import BaseModel, Field, model_validator
from typing import List, Literal


class VisionConfig(BaseModel):
    """Synthetic detector and PnP acceptance settings."""
    sigma_px: float = Field(1.0, ge=0)
    dropout: float = Field(0.1, ge=0, le=1)
    max_range: float = Field(20.0, gt=0)                # m
    max_rms_px: float = Field(3.0, gt=0)
    latency_min: float = Field(0.024, ge=0)             # s
    latency_max: float = Field(0.030, ge=0)             # s
    distorted: bool = False
    association: Literal["oracle", "nearest"] = "oracle"
    bearing_gate_deg: float = Field(30.0, gt=0)
    mc_samples: int = Field(100, ge=30)
    mc_distances: List[float] = Field(
        default_factory=lambda: [1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 11.0, 15.0, 20.0], min_length=2
    )
    mc_view_angles_deg: List[float] = Field(default_factory=lambda: [0.0, 25.0, 50.0], min_length=1)
    covariance_floor: float = Field(1e-4, ge=0)         # m^2, added to every R block
    calibration_seed: int = 0

    @model_validator(mode="after")
    def latency_ordered(self):
        if self.latency_max < self.latency_min:
            raise ValueError("latency_max must be >= latency_min")
        if sorted(self.mc_distances) != list(self.mc_distances):
            raise ValueError("mc_distances must be increasing")
        angles = list(self.mc_view_angles_deg)
        if sorted(angles) != angles or angles[0] < 0.0 or angles[-1] >= 80.0:
            raise ValueError("mc_view_angles_deg must be increasing within [0, 80)")
        return self


class CovarianceRequest(BaseModel):
    gate_distance: float = Field(3.0, gt=0.5, le=30.0)
    sigma_px: float = Field(1.0, ge=0)
    n_samples: int = Field(100, ge=30, le=5000)
    seed: int = 0


class CovarianceResponse(BaseModel):
    gate_distance: float
    sigma_px: float
    n_samples: int
    covariance: List[List[float]]
    std_m: List[float]
