import math

from fastapi import APIRouter, HTTPException, status

from app.exceptions import ConfigError, NoLaps, RaceSimError, UnknownTrack
from app.schemas.race import LapRecordOut, RaceConfig, RaceRequest, RaceResponse, SummaryRow
from app.services import analysis
from app.services.race import run_race

router = APIRouter(prefix="/api/races", tags=["races"])


def _finite(value):
    return None if value is None or not math.isfinite(value) else float(value)


def lap_out(lap) -> LapRecordOut:
    return LapRecordOut(
        run=lap.run, lap=lap.lap, lap_time=_finite(lap.lap_time), top_speed=lap.top_speed,
        path_length=lap.path_length, avg_speed=_finite(lap.avg_speed), gate_misses=lap.gate_misses,
        crashed=lap.crashed, timed_out=lap.timed_out, sector_times=list(lap.sector_times),
    )


def summary_rows(summary) -> list:
    rows = summary.astype(object).where(summary.notna(), None).to_dict("records")
    return [SummaryRow(**row) for row in rows]


@router.post("/", response_model=RaceResponse, status_code=status.HTTP_201_CREATED)
def create_race(request: RaceRequest):
    """Fly a deterministic race; identical requests give identical results"""
    cfg = RaceConfig(track=request.track, mode=request.mode, seed=request.seed, laps=request.laps)
    try:
        result = run_race(cfg)
    except UnknownTrack:
        raise HTTPException(status_code=404, detail="Track not found")
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    except RaceSimError as exc:
        raise HTTPException(status_code=400, detail=str(exc))

    try:
        summary = summary_rows(analysis.summarize(analysis.laps_frame(result.laps)))
    except NoLaps:
        summary = []

    return RaceResponse(
        track=cfg.track,
        mode=cfg.mode,
        seed=cfg.seed,
        laps=[lap_out(lap) for lap in result.laps],
        summary=summary,
        crashed=result.crashed,
    )
