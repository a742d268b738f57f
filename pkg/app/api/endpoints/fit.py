from fastapi import APIRouter, Depends, File, UploadFile
from typing import Dict
import logging

from app.api.endpoints.detect import run_config_form
from app.api.models.common import DensityConfig
from app.api.models.estimation import FitReport
from app.api.models.scenario import RunConfig
from app.api.services.dataset_io import read_dataset_bytes
from app.api.services.factor_model import FactorModelService, fit_report
from app.api.services.window import form_window, standardize_rows
from app.core.errors import AnalysisError, to_http_exception

router = APIRouter()
logger = logging.getLogger(__name__)

# One service (and model-density cache) per density configuration
factor_services: Dict[DensityConfig, FactorModelService] = {}


def get_factor_service(density_cfg: DensityConfig) -> FactorModelService:
    if density_cfg not in factor_services:
        factor_services[density_cfg] = FactorModelService(density_cfg)
    return factor_services[density_cfg]


@router.post("/api/v1/fit", response_model=FitReport)
async def fit_window(
    file: UploadFile = File(..., description="Dataset CSV: channel column, ISO-8601 timestamp header"),
    config: RunConfig = Depends(run_config_form),
):
    """Estimate (p, b) for one window; end_index defaults to the last sample"""
    content = await file.read()
    try:
        data = read_dataset_bytes(content, file.filename or "upload")
        end_index = data.n_samples - 1 if config.end_index is None else config.end_index
        window = standardize_rows(form_window(data, end_index, config.window_width))
        service = get_factor_service(config.density_config())
        result = service.fit(window, config.fit_grid(), keep_densities=config.densities)
        return fit_report(result, window, include_surface=config.surface)
    except AnalysisError as e:
        logger.warning(f"Fit request failed: {e}")
        raise to_http_exception(e)
