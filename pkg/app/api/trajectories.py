from fastapi import APIRouter, HTTPException

import numpy as np

from app.exceptions import ConfigError, InfeasibleTrajectory, NoConvergence, UnknownTrack
from app.schemas.trajectory import TrajectoryRequest, TrajectorySummary
from app.services import track_service
from app.services.geometry import GRAVITY
from app.services.trajectory import generate_surrogate, place_waypoints

router = APIRouter(prefix="/api/trajectories", tags=["trajectories"])


@router.post("/generate", response_model=TrajectorySummary)
def generate_trajectory(request: TrajectoryRequest):
    try:
        gate_map = track_service.get_track(request.track)
    except UnknownTrack:
        raise HTTPException(status_code=404, detail="Track not found")
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc))

    try:
        traj = generate_surrogate(
            place_waypoints(gate_map), twr_gen=request.twr_gen, dt=request.dt, closed=request.closed,
        )
    except (InfeasibleTrajectory, NoConvergence) as exc:
        raise HTTPException(status_code=422, detail=str(exc))

    return TrajectorySummary(
        track=gate_map.name,
        closed=traj.closed,
        lap_time=traj.lap_time,
        samples=len(traj),
        peak_thrust_accel=float(np.max(traj.thrust_accel)),
        thrust_accel_cap=request.twr_gen * GRAVITY,
        time_scale=traj.time_scale,
    )
