from fastapi import APIRouter, Body
from pydantic import BaseModel, Field
from typing import List

from app.api.models.detection import AlarmRecord, EvaluationReport, GroundTruthEvent
from app.api.services.detection import evaluate_tdr_far
from app.core.config import settings

router = APIRouter()


class EvaluateRequest(BaseModel):
    alarms: List[AlarmRecord] = Field(default_factory=list)
    truth: List[GroundTruthEvent] = Field(default_factory=list)
    tolerance: int = Field(settings.MATCH_TOLERANCE, ge=0)


@router.post("/api/v1/evaluate", response_model=EvaluationReport)
async def evaluate(request: EvaluateRequest = Body(...)):
    """True detecting rate and false alarming rate of alarms against labeled onsets"""
    return evaluate_tdr_far(request.alarms, request.truth, request.tolerance)
