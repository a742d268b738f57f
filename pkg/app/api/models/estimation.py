"""
app/api/models/estimation.py
Factor decomposition and (p, b) estimation results
"""

from datetime import datetime
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.api.models.common import SpectralDensity
from app.core.config import settings
from app.core.errors import EmptyGridError


class FactorDecomposition(BaseModel):
    """R = L F + U for the top-p principal components of a standardized window"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    p: int
    factors: np.ndarray
    loadings: np.ndarray
    residuals: np.ndarray
    retained_eigenvalues: np.ndarray
    retained_eigenvectors: np.ndarray


class FitGrid(BaseModel):
    """Search ranges for p and b"""
    model_config = ConfigDict(frozen=True)

    p_min: int = Field(settings.P_MIN, ge=0)
    p_max: int = Field(settings.P_MAX, ge=0)
    b_step: float = Field(settings.B_STEP, gt=0.0, lt=1.0)
    b_min: float = Field(0.0, ge=0.0, lt=1.0)
    b_max: float = Field(settings.B_MAX, ge=0.0, lt=1.0)
    include_p0: bool = False

    @model_validator(mode="after")
    def _check_ranges(self):
        if self.p_max < self.p_min:
            raise EmptyGridError(f"empty p range {self.p_min}..{self.p_max}")
        if self.b_max < self.b_min:
            raise EmptyGridError(f"empty b range {self.b_min}..{self.b_max}")
        return self

    def p_values(self, n_channels: int) -> List[int]:
        start = max(self.p_min, 1)
        values = [p for p in range(start, self.p_max + 1) if p < n_channels]
        if self.include_p0:
            values.insert(0, 0)
        if not values:
            raise EmptyGridError(f"no admissible p in {start}..{self.p_max} for N={n_channels}")
        return values

    def b_values(self) -> np.ndarray:
        count = int(np.floor((self.b_max - self.b_min) / self.b_step + 1e-9)) + 1
        return np.round(self.b_min + self.b_step * np.arange(count), 10)


class EstimationResult(BaseModel):
    """Argmin of the spectral distance surface"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    p_hat: int
    b_hat: float
    min_distance: float
    distance_surface: Dict[Tuple[int, float], float]
    decomposition: FactorDecomposition
    residual_density: Optional[SpectralDensity] = None
    model_density: Optional[SpectralDensity] = None

    def surface_records(self) -> List[Dict[str, float]]:
        return [
            {"p": p, "b": b, "distance": d} for (p, b), d in sorted(self.distance_surface.items())
        ]


class DensityRecord(BaseModel):
    bin_center: float
    mass: float


class FitReport(BaseModel):
    """JSON report of a single-window fit"""
    p_hat: int
    b_hat: float
    min_distance: float
    end_index: int
    end_time: Optional[datetime] = None
    n_channels: int
    window_width: int
    retained_eigenvalues: List[float] = Field(default_factory=list)
    distance_surface: Optional[List[Dict[str, float]]] = None
    residual_density: Optional[List[DensityRecord]] = None
    model_density: Optional[List[DensityRecord]] = None

    @field_validator("retained_eigenvalues", mode="before")
    @classmethod
    def _as_list(cls, value):
        return [float(v) for v in value]

    class Config:
        json_schema_extra = {
            "example": {
                "p_hat": 3,
                "b_hat": 0.5,
                "min_distance": 0.026,
                "end_index": 199,
                "end_time": "2020-01-01T00:03:19",
                "n_channels": 57,
                "window_width": 200,
                "retained_eigenvalues": [14.2, 11.8, 9.6],
            }
        }
