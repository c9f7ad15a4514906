from pydantic import BaseModel, Field, model_validator
from typing import List

from app.services.geometry import GRAVITY


def _triple(value: float):
    return Field(default_factory=lambda: [value, value, value], min_length=3, max_length=3)


class RatePidGains(BaseModel):
    """Inner body-rate loop, per axis (roll, pitch, yaw).

    Gains are in acceleration units (they are scaled by the inertia), so
    the defaults give ~50 ms settling independent of the airframe.
    """
    kp: List[float] = _triple(300.0)
    ki: List[float] = _triple(30.0)
    kd: List[float] = _triple(3.8)
    integral_limit: float = Field(0.5, gt=0)


class QuadParams(BaseModel):
    mass: float = Field(0.87, gt=0)                         # kg, 665.5 g frame + 205 g battery
    inertia: List[float] = Field(default_factory=lambda: [0.0030, 0.0030, 0.0050], min_length=3, max_length=3)
    arm_length: float = Field(0.11, gt=0)                   # m, centre to rotor
    thrust_to_weight: float = Field(7.0, gt=1.0)
    rotor_time_constant: float = Field(0.03, gt=0)          # s
    yaw_torque_coefficient: float = Field(0.016, gt=0)      # N*m per N of rotor thrust
    drag: List[float] = _triple(0.0)                        # N*s/m, world axes
    max_rate: float = Field(15.0, gt=0)                     # rad/s
    rate_pid: RatePidGains = Field(default_factory=RatePidGains)

    class Config:
        frozen = True

    @model_validator(mode="after")
    def positive_inertia(self):
        if min(self.inertia) <= 0:
            raise ValueError("inertia entries must be positive")
        if min(self.drag) < 0:
            raise ValueError("drag coefficients must be non-negative")
        return self

    @property
    def hover_thrust(self) -> float:
        return self.mass * GRAVITY

    @property
    def max_thrust(self) -> float:
        return self.thrust_to_weight * self.mass * GRAVITY

    @property
    def max_rotor_thrust(self) -> float:
        return self.max_thrust / 4.0
