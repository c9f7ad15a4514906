from pydantic import BaseModel, Field, model_validator
from typing import List, Tuple


class FisheyeIntrinsics(BaseModel):
    """Kannala-Brandt equidistant fisheye model, four radial coefficients.

    Pixel units for fx, fy, cx, cy, width, height; k is dimensionless.
    """
    fx: float = Field(..., gt=0)
    fy: float = Field(..., gt=0)
    cx: float
    cy: float
    k: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    width: int = Field(..., gt=0)
    height: int = Field(..., gt=0)

    class Config:
        frozen = True

    @model_validator(mode="after")
    def principal_point_inside(self):
        if not (0.0 <= self.cx < self.width and 0.0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        return self


class CameraMount(BaseModel):
    """Camera placement on the airframe (body: x forward, y left, z up)."""
    uptilt_deg: float = Field(25.0, ge=-30.0, le=60.0)
    offset: List[float] = Field(default_factory=lambda: [0.08, 0.0, 0.02], min_length=3, max_length=3)
