from pydantic import BaseModel, Field
from typing import List, Optional


class ImuNoiseConfig(BaseModel):
    """MPU6000-class noise densities.

    Densities are continuous-time (per sqrt(Hz)); the sampler divides by
    sqrt(dt) to obtain the per-sample standard deviation.
    """
    accel_noise_density: float = Field(0.05, ge=0)      # m/s^2/sqrt(Hz)
    gyro_noise_density: float = Field(0.005, ge=0)      # rad/s/sqrt(Hz)
    accel_bias_random_walk: float = Field(1e-4, ge=0)   # m/s^3/sqrt(Hz)
    gyro_bias_random_walk: float = Field(1e-4, ge=0)    # rad/s^2/sqrt(Hz)
    initial_accel_bias: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], min_length=3, max_length=3)
    initial_gyro_bias: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], min_length=3, max_length=3)

    @classmethod
    def noiseless(cls) -> "ImuNoiseConfig":
        return cls(
            accel_noise_density=0.0, gyro_noise_density=0.0,
            accel_bias_random_walk=0.0, gyro_bias_random_walk=0.0,
        )


class DriftModel(BaseModel):
    sigma_rw: float = Field(0.05, ge=0)                 # m/sqrt(s), position drift random walk
    sigma_p: float = Field(0.005, ge=0)                 # m, white position noise
    sigma_v: float = Field(0.02, ge=0)                  # m/s, white velocity noise
    yaw_rw_deg: float = Field(0.1, ge=0)                # deg/sqrt(s)
    drift_per_meter: float = Field(0.015, ge=0)         # m of drift per m flown, along a per-run heading
    loop_closure_interval: Optional[float] = Field(None, gt=0)  # s
    shrink_factor: float = Field(0.5, ge=0, le=1)

    @classmethod
    def perfect(cls) -> "DriftModel":
        return cls(sigma_rw=0.0, sigma_p=0.0, sigma_v=0.0, yaw_rw_deg=0.0, drift_per_meter=0.0)


class SensorRates(BaseModel):
    """Rate table in Hz."""
    physics: int = Field(1000, gt=0)
    imu: int = Field(500, gt=0)
    vio: int = Field(200, gt=0)
    camera: int = Field(30, gt=0)
    control: int = Field(100, gt=0)
    mocap: int = Field(275, gt=0)
