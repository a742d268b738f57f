"""
app/api/models/common.py
Shared domain types: data windows and spectral densities
"""

from enum import Enum
from typing import List, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.config import settings
from app.core.errors import AspectRatioError, InvalidSpecError, MissingDataError


def _frozen_array(value) -> np.ndarray:
    array = np.array(value, dtype=float)
    array.flags.writeable = False
    return array


class TestFunctionKind(str, Enum):
    """Test functions for the partial linear eigenvalue statistic"""
    __test__ = False

    CHEBYSHEV = "chebyshev"
    ENTROPY = "entropy"
    LIKELIHOOD_RATIO = "likelihood_ratio"
    WASSERSTEIN = "wasserstein"


class AnomalyKind(str, Enum):
    STEP = "step"
    RAMP = "ramp"


class BinningKind(str, Enum):
    """How eigenvalues and model densities are spread over bins"""
    LINEAR = "linear"
    HARD = "hard"


class AlarmIndicator(str, Enum):
    """Indicator whose confidence level drives alarms"""
    COMBINED = "combined"
    N_PHI = "n_phi"
    B_HAT = "b_hat"


class TimeSeriesSet(BaseModel):
    """Channels x time measurement matrix"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    channels: List[str]
    timestamps: pd.DatetimeIndex
    values: np.ndarray

    @field_validator("timestamps", mode="before")
    @classmethod
    def _as_index(cls, value):
        return pd.DatetimeIndex(value)

    @field_validator("values", mode="before")
    @classmethod
    def _as_array(cls, value):
        return _frozen_array(value)

    @model_validator(mode="after")
    def _check_shape(self):
        if self.values.ndim != 2:
            raise InvalidSpecError(f"values must be a matrix, got {self.values.ndim} dimensions")
        n, t = self.values.shape
        if n != len(self.channels) or t != len(self.timestamps):
            raise InvalidSpecError(
                f"values shape {self.values.shape} does not match "
                f"{len(self.channels)} channels x {len(self.timestamps)} timestamps"
            )
        if not np.all(np.isfinite(self.values)):
            missing = np.argwhere(~np.isfinite(self.values))[:5].tolist()
            raise MissingDataError(f"Missing or non-finite samples at (row, column) {missing}")
        if t > 1 and not (self.timestamps.is_monotonic_increasing and self.timestamps.is_unique):
            raise InvalidSpecError("timestamps must be strictly increasing")
        return self

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]


class DataWindow(BaseModel):
    """N x T raw data matrix ending at the current sampling time"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray
    end_time: Optional[pd.Timestamp] = None
    end_index: int = 0
    channels: List[str] = Field(default_factory=list)

    @field_validator("matrix", mode="before")
    @classmethod
    def _as_array(cls, value):
        return _frozen_array(value)

    @model_validator(mode="after")
    def _check_shape(self):
        if self.matrix.ndim != 2:
            raise InvalidSpecError("window matrix must be two dimensional")
        n, t = self.matrix.shape
        if n < 2 or t < 2:
            raise InvalidSpecError(f"window must be at least 2x2, got {n}x{t}")
        if n > t:
            raise AspectRatioError(f"aspect ratio c = N/T = {n}/{t} exceeds 1")
        return self

    @property
    def aspect_ratio(self) -> float:
        n, t = self.matrix.shape
        return n / t


class StandardizedWindow(BaseModel):
    """Window with every row at mean 0 and (population) standard deviation 1"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray
    row_means: np.ndarray
    row_stds: np.ndarray
    end_time: Optional[pd.Timestamp] = None
    end_index: int = 0
    channels: List[str] = Field(default_factory=list)

    @field_validator("matrix", "row_means", "row_stds", mode="before")
    @classmethod
    def _as_array(cls, value):
        return _frozen_array(value)

    @property
    def aspect_ratio(self) -> float:
        n, t = self.matrix.shape
        return n / t


class SpectralDensity(BaseModel):
    """Binned eigenvalue density: K+1 ascending edges and K nonnegative masses summing to 1"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    bin_edges: np.ndarray
    mass: np.ndarray

    @field_validator("bin_edges", "mass", mode="before")
    @classmethod
    def _as_array(cls, value):
        return _frozen_array(value)

    @model_validator(mode="after")
    def _check(self):
        if self.bin_edges.ndim != 1 or len(self.bin_edges) != len(self.mass) + 1:
            raise InvalidSpecError("expected K+1 bin edges for K masses")
        if np.any(np.diff(self.bin_edges) <= 0):
            raise InvalidSpecError("bin edges must be strictly ascending")
        if np.any(self.mass < 0):
            raise InvalidSpecError("bin masses must be nonnegative")
        if abs(float(self.mass.sum()) - 1.0) > 1e-9:
            raise InvalidSpecError(f"bin masses sum to {self.mass.sum()}, expected 1")
        return self

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"bin_center": self.centers, "mass": self.mass})


class MpParams(BaseModel):
    """Marchenko-Pastur law parameters"""
    model_config = ConfigDict(frozen=True)

    c: float = Field(..., gt=0.0, le=1.0, description="Aspect ratio N/T")
    sigma2: float = Field(1.0, gt=0.0, description="Entry variance")

    @property
    def lower(self) -> float:
        return self.sigma2 * (1.0 - np.sqrt(self.c)) ** 2

    @property
    def upper(self) -> float:
        return self.sigma2 * (1.0 + np.sqrt(self.c)) ** 2


class Ar1ModelParams(BaseModel):
    """Parameters of the limiting density of (1/T) U U^T for AR(1) rows"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    b: float = Field(..., gt=-1.0, lt=1.0, description="Autoregressive rate")
    c: float = Field(..., gt=0.0, le=1.0, description="Aspect ratio N/T")
    epsilon: float = Field(settings.EPSILON, gt=0.0, description="Imaginary offset of z")
    lambda_grid: Optional[np.ndarray] = None

    @field_validator("lambda_grid", mode="before")
    @classmethod
    def _as_array(cls, value):
        return None if value is None else _frozen_array(value)

    @model_validator(mode="after")
    def _check_grid(self):
        if self.lambda_grid is not None and np.any(np.diff(self.lambda_grid) <= 0):
            raise InvalidSpecError("lambda_grid must be strictly ascending")
        return self

    @property
    def a(self) -> float:
        return float(np.sqrt(1.0 - self.b ** 2))

    @property
    def support_bound(self) -> float:
        """Upper bound on the stretched support before headroom"""
        return (1.0 + np.sqrt(self.c)) ** 2 * (1.0 + abs(self.b)) / (1.0 - abs(self.b))

    def grid(self, points: int = None, headroom: float = None) -> np.ndarray:
        if self.lambda_grid is not None:
            return self.lambda_grid
        points = points or settings.GRID_POINTS
        headroom = headroom or settings.GRID_HEADROOM
        return np.linspace(0.0, self.support_bound * headroom, points)


class DensityConfig(BaseModel):
    """How model densities are evaluated and how spectra are binned"""
    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(settings.EPSILON, gt=0.0)
    grid_points: int = Field(settings.GRID_POINTS, ge=50)
    headroom: float = Field(settings.GRID_HEADROOM, ge=1.0)
    bins: Union[int, str] = Field(settings.BINS, description="Bin count or 'auto'")
    support_tol: float = Field(settings.SUPPORT_TOL, gt=0.0, lt=1.0)
    extrapolate: bool = Field(settings.EXTRAPOLATE, description="Cancel the first-order smoothing error of eps")
    binning: BinningKind = Field(BinningKind(settings.BINNING), description="Split masses between centres or count hard")

    @field_validator("bins", mode="before")
    @classmethod
    def _check_bins(cls, value):
        if isinstance(value, str) and value.strip().lower() == "auto":
            return "auto"
        bins = int(value)
        if bins < 1:
            raise ValueError("bins must be positive")
        return bins

    def bin_count(self, n_values: int) -> int:
        """Bins across the reference support; auto keeps about six values per bin."""
        if self.bins == "auto":
            return int(np.clip(np.ceil(n_values / 6), 8, 100))
        return int(self.bins)
