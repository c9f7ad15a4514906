from fastapi import APIRouter, HTTPException
from typing import List

from app.exceptions import ConfigError, UnknownTrack
from app.schemas.track import GateMap
from app.schemas.trajectory import WaypointOut
from app.services import track_service
from app.services.trajectory import place_waypoints

router = APIRouter(prefix="/api/tracks", tags=["tracks"])


def _load(name: str) -> GateMap:
    try:
        return track_service.get_track(name)
    except UnknownTrack:
        raise HTTPException(status_code=404, detail="Track not found")
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc))


@router.get("/", response_model=List[str])
def list_tracks():
    """Names of the bundled gate maps"""
    return track_service.list_tracks()


@router.get("/{name}", response_model=GateMap)
def get_track(name: str):
    return _load(name)


@router.get("/{name}/waypoints", response_model=List[WaypointOut])
def get_waypoints(name: str):
    gate_map = _load(name)
    return [
        WaypointOut(gate_id=w.gate_id, side=w.side, position=[float(x) for x in w.position])
        for w in place_waypoints(gate_map)
    ]
