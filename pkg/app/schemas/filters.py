from pydantic import BaseModel, Field
from typing import List


class DriftFilterConfig(BaseModel):
    sigma_a2: float = Field(8.0, ge=0)                  # m^2/s^4, drift process noise
    gating: bool = True
    gate_chi2_p: float = Field(0.99, gt=0, lt=1)
    yaw_outlier_deg: float = Field(25.0, gt=0)
    max_consecutive_rejections: int = Field(5, ge=1)


class EkfConfig(BaseModel):
    """Noise densities of the IMU model and the static pose measurement covariance."""
    accel_noise_density: float = Field(0.05, gt=0)      # m/s^2/sqrt(Hz)
    gyro_noise_density: float = Field(0.005, gt=0)      # rad/s/sqrt(Hz)
    accel_bias_random_walk: float = Field(1e-4, ge=0)
    gyro_bias_random_walk: float = Field(1e-4, ge=0)
    position_sigma: float = Field(0.03, gt=0)           # m
    attitude_sigma: float = Field(0.02, gt=0)           # rad
    max_staleness: float = Field(0.05, gt=0)            # s
    max_gyro_bias: float = Field(0.5, gt=0)             # rad/s
    max_accel_bias: float = Field(2.0, gt=0)            # m/s^2
    initial_sigmas: List[float] = Field(
        # attitude, position, velocity, gyro bias, accel bias
        default_factory=lambda: [0.02, 0.05, 0.1, 0.01, 0.1], min_length=5, max_length=5
    )
