from fastapi import APIRouter, Body, HTTPException
from fastapi.responses import Response
from pydantic import BaseModel, Field, ValidationError
from typing import Optional
import logging

from app.api.models.scenario import ScenarioSpec
from app.api.services.dataset_io import dataset_frame
from app.api.services.synth import generate, preset
from app.core.errors import AnalysisError, to_http_exception

router = APIRouter()
logger = logging.getLogger(__name__)


class SimulateRequest(BaseModel):
    scenario: Optional[str] = Field(None, description="Preset name: case1, case2-steps, case2-ramp, null")
    spec: Optional[ScenarioSpec] = Field(None, description="Full scenario, used when no preset is named")
    seed: Optional[int] = None

    class Config:
        json_schema_extra = {"example": {"scenario": "case1", "seed": 7}}


@router.post("/api/v1/simulate")
async def simulate(request: SimulateRequest = Body(...)):
    """Generate a synthetic dataset and return it as CSV"""
    if request.scenario is None and request.spec is None:
        raise HTTPException(status_code=400, detail="Either a preset scenario or a spec is required.")
    try:
        if request.scenario is not None:
            spec = preset(request.scenario, request.seed)
        else:
            spec = request.spec if request.seed is None else request.spec.model_copy(update={"seed": request.seed})
        data = generate(spec)
    except AnalysisError as e:
        raise to_http_exception(e)
    except ValidationError as e:
        raise HTTPException(status_code=422, detail=str(e))

    return Response(content=dataset_frame(data).to_csv(), media_type="text/csv")
