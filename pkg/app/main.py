from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
import time

from app.core.config import configure_logging

from app.api.endpoints import detect, evaluate, fit, general, simulate, spectra
from app.api.services.stats_tracker import stats_tracker

configure_logging()

app = FastAPI(
    title="Spatio-Temporal Correlation Analysis API",
    description="Random-matrix anomaly detection and localization for multichannel time series",
    version="1.0.0"
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Monitoring and docs routes stay out of the request statistics
UNTRACKED_PREFIXES = ("/health", "/api/v1/stats", "/docs", "/openapi.json", "/redoc")


@app.middleware("http")
async def track_requests(request: Request, call_next):
    started = time.perf_counter()
    response = await call_next(request)
    if not request.url.path.startswith(UNTRACKED_PREFIXES):
        stats_tracker.record_request(
            endpoint=request.url.path,
            response_time=(time.perf_counter() - started) * 1000,
            status_code=response.status_code,
        )
    return response


for module in (general, simulate, fit, detect, evaluate, spectra):
    app.include_router(module.router)

if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
