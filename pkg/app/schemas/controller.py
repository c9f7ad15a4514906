from pydantic import BaseModel, Field, model_validator
from typing import List


def _weights(*values: float):
    return Field(default_factory=lambda: list(values), min_length=3, max_length=3)


class ControllerConfig(BaseModel):
    """Receding-horizon tracking controller.

    Weights are per axis; attitude weights act on the rotation-vector error.
    """
    horizon: float = Field(1.0, gt=0)                   # s
    nodes: int = Field(20, ge=2)
    delay: float = Field(0.03, ge=0)                    # s, total command delay
    predict_delay: bool = True
    max_iterations: int = Field(5, ge=1)
    position_weight: List[float] = _weights(100.0, 100.0, 150.0)
    velocity_weight: List[float] = _weights(10.0, 10.0, 10.0)
    attitude_weight: List[float] = _weights(5.0, 5.0, 2.0)
    thrust_weight: float = Field(0.5, ge=0)
    rate_weight: float = Field(1.0, ge=0)
    terminal_factor: float = Field(3.0, ge=0)
    thrust_min: float = Field(0.5, ge=0)                # N
    thrust_max: float = Field(0.0, ge=0)                # N, 0 means the airframe maximum
    rate_max: float = Field(12.0, gt=0)                 # rad/s
    record_solve_time: bool = False

    @model_validator(mode="after")
    def non_negative_weights(self):
        for name in ("position_weight", "velocity_weight", "attitude_weight"):
            if min(getattr(self, name)) < 0:
                raise ValueError(f"{name} must be non-negative")
        return self

    @property
    def node_dt(self) -> float:
        return self.horizon / self.nodes
