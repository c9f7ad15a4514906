import math
from pydantic import BaseModel, Field
from typing import List, Optional

import numpy as np

OUTER_HALF_SIZE = 1.0668   # m, 7x7 ft outer frame
INNER_HALF_SIZE = 0.762    # m, 5x5 ft opening


class Gate(BaseModel):
    id: str
    center: List[float] = Field(..., min_length=3, max_length=3)
    yaw_rad: float
    half_size: float = Field(INNER_HALF_SIZE, gt=0)
    outer_half_size: float = Field(OUTER_HALF_SIZE, gt=0)
    split_s: bool = False

    class Config:
        frozen = True

    @property
    def position(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    @property
    def normal(self) -> np.ndarray:
        """Race direction through the opening (gate x axis)."""
        return np.array([math.cos(self.yaw_rad), math.sin(self.yaw_rad), 0.0])

    @property
    def lateral(self) -> np.ndarray:
        """Gate y axis (left when looking along the race direction)."""
        return np.array([-math.sin(self.yaw_rad), math.cos(self.yaw_rad), 0.0])

    def corners_gate(self) -> np.ndarray:
        h = self.half_size
        return np.array([[0.0, h, h], [0.0, -h, h], [0.0, -h, -h], [0.0, h, -h]])

    def corners_world(self) -> np.ndarray:
        h = self.half_size
        c = self.position
        up = np.array([0.0, 0.0, 1.0])
        return np.array([
            c + h * self.lateral + h * up,
            c - h * self.lateral + h * up,
            c - h * self.lateral - h * up,
            c + h * self.lateral - h * up,
        ])


class GateMap(BaseModel):
    """Gates in race order."""
    name: str = "unnamed"
    description: Optional[str] = None
    gates: List[Gate] = Field(..., min_length=1)

    def gate(self, gate_id: str) -> Gate:
        for g in self.gates:
            if g.id == gate_id:
                return g
        raise KeyError(gate_id)

    def index(self, gate_id: str) -> int:
        for i, g in enumerate(self.gates):
            if g.id == gate_id:
                return i
        raise KeyError(gate_id)

    @property
    def split_s_ids(self) -> set:
        return {g.id for g in self.gates if g.split_s}
