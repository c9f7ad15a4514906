from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from app.models.vision import CornerDetection


@dataclass(frozen=True)
class ImuSample:
    t: float
    a: np.ndarray       # specific force, body frame
    omega: np.ndarray   # body rates


@dataclass(frozen=True)
class VioSample:
    t: float
    q: np.ndarray
    p: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class ImuBiases:
    accel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True)
class VioDrift:
    """Hidden VIO error process: translational drift and yaw drift.

    ``odometer`` is the true position at the last sample; distance flown past it
    accrues drift along the unit ``direction``.
    """
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw: float = 0.0
    t: float = 0.0
    last_closure: float = 0.0
    direction: np.ndarray = field(default_factory=lambda: np.zeros(3))
    odometer: Optional[np.ndarray] = None


@dataclass
class CameraFrameEvent:
    """A frame captured at ``t_capture`` whose detections become usable at ``t_available``."""
    t_capture: float
    t_available: float
    vio: VioSample
    detections: List[CornerDetection] = field(default_factory=list)
