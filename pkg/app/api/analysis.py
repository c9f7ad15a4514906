from fastapi import APIRouter, HTTPException
from typing import List

import pandas as pd

from app.exceptions import NoLaps
from app.schemas.race import AnalysisRequest, SummaryRow
from app.services import analysis
from app.api.races import summary_rows

router = APIRouter(prefix="/api/analysis", tags=["analysis"])


@router.post("/summary", response_model=List[SummaryRow])
def summarize_laps(request: AnalysisRequest):
    laps = pd.DataFrame([lap.model_dump(exclude={"sector_times"}) for lap in request.laps])
    laps["lap_time"] = laps["lap_time"].astype(float)
    try:
        summary = analysis.summarize(laps)
    except NoLaps as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return summary_rows(summary)
