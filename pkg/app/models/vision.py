from dataclasses import dataclass, field

import numpy as np

from app.services.geometry import Pose


@dataclass(frozen=True)
class CornerDetection:
    """Four gate corners in pixel coordinates, ordered TL, TR, BR, BL.

    ``distorted`` marks pixels that live on the fisheye image and must be
    undistorted before PnP; otherwise they are on the pinhole-equivalent image.
    """
    gate_id: str
    corners: np.ndarray                  # (4, 2) px
    visible: np.ndarray = field(default_factory=lambda: np.ones(4, dtype=bool))
    distorted: bool = False


@dataclass(frozen=True)
class GateMeasurement:
    t: float
    gate_id: str
    camera_from_gate: Pose
    rms_px: float

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.camera_from_gate.translation))
