from fastapi import APIRouter, HTTPException

import numpy as np

from app.exceptions import ConfigError, RaceSimError
from app.schemas.track import Gate
from app.schemas.vision import CovarianceRequest, CovarianceResponse
from app.services import track_service
from app.services.geometry import camera_looking
from app.services.vision import estimate_R_montecarlo

router = APIRouter(prefix="/api/calibration", tags=["calibration"])


@router.post("/measurement-covariance", response_model=CovarianceResponse)
def measurement_covariance(request: CovarianceRequest):
    """Monte-Carlo PnP position covariance for a head-on view of a gate"""
    try:
        K = track_service.get_intrinsics()
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc))

    gate = Gate(id="calibration", center=[0.0, 0.0, 0.0], yaw_rad=0.0)
    cam = camera_looking([-request.gate_distance, 0.0, 0.0], 0.0)
    try:
        R = estimate_R_montecarlo(gate, cam, K, request.sigma_px, request.n_samples, seed=request.seed)
    except RaceSimError as exc:
        raise HTTPException(status_code=400, detail=str(exc))

    return CovarianceResponse(
        gate_distance=request.gate_distance,
        sigma_px=request.sigma_px,
        n_samples=request.n_samples,
        covariance=R.tolist(),
        std_m=np.sqrt(np.diag(R)).tolist(),
    )
