from fastapi import APIRouter, Depends, File, Form, HTTPException, UploadFile
from pydantic import ValidationError
from typing import Optional
import logging

from app.api.models.scenario import RunConfig
from app.api.services.dataset_io import read_dataset_bytes
from app.api.services.detection import DetectionService
from app.core.config import settings
from app.core.errors import AnalysisError, to_http_exception

router = APIRouter()
logger = logging.getLogger(__name__)

# Initialize services
detection_service = DetectionService()


def run_config_form(
    window_width: int = Form(settings.WINDOW_WIDTH),
    history_length: int = Form(settings.HISTORY_LENGTH),
    threshold: float = Form(settings.THRESHOLD),
    test_function: str = Form(settings.TEST_FUNCTION),
    indicator: str = Form(settings.ALARM_INDICATOR),
    top_k: int = Form(settings.TOP_K_CHANNELS),
    upward_only: bool = Form(settings.UPWARD_ONLY),
    adjust_autocorrelation: bool = Form(settings.ADJUST_AUTOCORRELATION),
    min_duration: int = Form(settings.MIN_DURATION),
    merge_gap: int = Form(settings.MERGE_GAP),
    p_min: int = Form(settings.P_MIN),
    p_max: int = Form(settings.P_MAX),
    b_step: float = Form(settings.B_STEP),
    b_max: float = Form(settings.B_MAX),
    include_p0: bool = Form(False),
    bins: str = Form(settings.BINS),
    binning: str = Form(settings.BINNING),
    end_index: Optional[int] = Form(None),
    surface: bool = Form(False),
    densities: bool = Form(False),
) -> RunConfig:
    """Form fields of an upload request, validated as one RunConfig"""
    try:
        return RunConfig(
            window_width=window_width,
            history_length=history_length,
            threshold=threshold,
            test_function=test_function,
            indicator=indicator,
            top_k=top_k,
            n_jobs=1,
            upward_only=upward_only,
            adjust_autocorrelation=adjust_autocorrelation,
            min_duration=min_duration,
            merge_gap=merge_gap,
            p_min=p_min,
            p_max=p_max,
            b_step=b_step,
            b_max=b_max,
            include_p0=include_p0,
            bins=bins if bins == "auto" else int(bins),
            binning=binning,
            end_index=end_index,
            surface=surface,
            densities=densities,
        )
    except (ValidationError, ValueError) as e:
        raise HTTPException(status_code=422, detail=str(e))
    except AnalysisError as e:
        raise to_http_exception(e)


async def _run(file: UploadFile, config: RunConfig):
    content = await file.read()
    try:
        data = read_dataset_bytes(content, file.filename or "upload")
        return detection_service.run_detection(data, config.detection_config())
    except AnalysisError as e:
        logger.warning(f"Detection request failed: {e}")
        raise to_http_exception(e)


@router.post("/api/v1/detect")
async def detect(
    file: UploadFile = File(..., description="Dataset CSV: channel column, ISO-8601 timestamp header"),
    config: RunConfig = Depends(run_config_form),
):
    """Run sliding-window detection over an uploaded dataset"""
    run = await _run(file, config)
    frame = run.series.to_frame(config.top_k)
    frame["time"] = frame["time"].dt.strftime("%Y-%m-%dT%H:%M:%S.%f")
    return {
        "windows": len(run.series),
        "failures": [f.model_dump() for f in run.failures],
        "alarms": [a.model_dump(mode="json") for a in run.alarms],
        "indicators": frame.to_dict(orient="records"),
    }


@router.post("/api/v1/locate")
async def locate(
    file: UploadFile = File(..., description="Dataset CSV: channel column, ISO-8601 timestamp header"),
    config: RunConfig = Depends(run_config_form),
):
    """Location indicator curves and the channels located by each alarm"""
    run = await _run(file, config)
    frame = run.series.eta_frame()
    frame["time"] = frame["time"].dt.strftime("%Y-%m-%dT%H:%M:%S.%f")
    return {
        "channels": run.series.channels,
        "eta": frame.to_dict(orient="records"),
        "alarms": [
            {
                "index": a.index,
                "end_index": a.end_index,
                "top_channel": a.top_channel.model_dump() if a.top_channel else None,
                "located_channels": [c.model_dump() for c in a.located_channels],
            }
            for a in run.alarms
        ],
    }
