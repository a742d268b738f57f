from fastapi import APIRouter
from datetime import datetime
from app.api.services.stats_tracker import stats_tracker
from app.core.config import settings

router = APIRouter()

API_NAME = "Spatio-Temporal Correlation Analysis API"
API_VERSION = "1.0.0"

ENDPOINTS = {
    "simulate": "/api/v1/simulate",
    "fit": "/api/v1/fit",
    "detect": "/api/v1/detect",
    "locate": "/api/v1/locate",
    "evaluate": "/api/v1/evaluate",
    "mp_spectrum": "/api/v1/spectra/mp",
    "frv_spectrum": "/api/v1/spectra/frv",
    "health": "/health",
    "stats": "/api/v1/stats",
}


def detection_defaults() -> dict:
    return {
        "window_width": settings.WINDOW_WIDTH,
        "history_length": settings.HISTORY_LENGTH,
        "threshold": settings.THRESHOLD,
        "test_function": settings.TEST_FUNCTION,
        "indicator": settings.ALARM_INDICATOR,
        "p_range": [settings.P_MIN, settings.P_MAX],
        "b_step": settings.B_STEP,
        "b_max": settings.B_MAX,
        "n_jobs": settings.N_JOBS,
    }


@router.get("/")
async def root():
    return {"name": API_NAME, "version": API_VERSION, "endpoints": ENDPOINTS}


@router.get("/health")
async def health_check():
    """Liveness plus the detection defaults this process was configured with"""
    return {
        "status": "healthy",
        "timestamp": datetime.utcnow().isoformat(),
        "version": API_VERSION,
        "environment": settings.ENVIRONMENT,
        "defaults": detection_defaults(),
    }


@router.get("/api/v1/stats")
async def get_stats():
    return stats_tracker.get_stats()


@router.post("/api/v1/stats/reset")
async def reset_stats():
    stats_tracker.reset_stats()
    return {"message": "Statistics reset successfully"}
