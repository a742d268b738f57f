from fastapi import APIRouter, Query
from typing import Optional

from app.api.models.common import Ar1ModelParams, DensityConfig, MpParams
from app.api.services.spectra import (
    curve_support,
    curve_to_density,
    frv_ar1_curve,
    make_edges,
    mp_reference_density,
)
from app.core.config import settings
from app.core.errors import AnalysisError, to_http_exception

router = APIRouter()


def _records(density):
    return [{"bin_center": float(c), "mass": float(m)} for c, m in zip(density.centers, density.mass)]


@router.get("/api/v1/spectra/mp")
async def mp_spectrum(
    c: float = Query(..., gt=0.0, le=1.0, description="Aspect ratio N/T"),
    sigma2: float = Query(1.0, gt=0.0),
    bins: int = Query(100, ge=1, le=1000),
):
    """Binned Marchenko-Pastur density over its support"""
    params = MpParams(c=c, sigma2=sigma2)
    try:
        density = mp_reference_density(params, make_edges(params.lower, params.upper, bins))
    except AnalysisError as e:
        raise to_http_exception(e)
    return {"c": c, "sigma2": sigma2, "support": [params.lower, params.upper], "density": _records(density)}


@router.get("/api/v1/spectra/frv")
async def frv_spectrum(
    b: float = Query(..., ge=0.0, lt=1.0, description="Autoregressive rate"),
    c: float = Query(..., gt=0.0, le=1.0, description="Aspect ratio N/T"),
    bins: int = Query(100, ge=1, le=1000),
    epsilon: float = Query(settings.EPSILON, gt=0.0),
    grid_points: Optional[int] = Query(None, ge=50, le=20000),
):
    """Binned limiting density of AR(1)-correlated sample covariance matrices"""
    density_cfg = DensityConfig(epsilon=epsilon, grid_points=grid_points or settings.GRID_POINTS, bins=bins)
    try:
        grid, rho = frv_ar1_curve(Ar1ModelParams(b=b, c=c, epsilon=epsilon), density_cfg)
        lower, upper = curve_support(grid, rho, density_cfg.support_tol)
        density = curve_to_density(grid, rho, make_edges(lower, upper, bins))
    except AnalysisError as e:
        raise to_http_exception(e)
    return {"b": b, "c": c, "support": [lower, upper], "density": _records(density)}
