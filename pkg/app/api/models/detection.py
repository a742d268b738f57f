"""
app/api/models/detection.py
Detection configuration, indicator series, alarms and TDR/FAR evaluation models
"""

from datetime import datetime
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.api.models.common import AlarmIndicator, DensityConfig, TestFunctionKind
from app.api.models.estimation import FitGrid
from app.core.config import settings
from app.core.errors import DomainError, InvalidSpecError


class TestFunction(BaseModel):
    """Test function phi applied to each retained eigenvalue"""
    __test__ = False
    model_config = ConfigDict(frozen=True)

    kind: TestFunctionKind = TestFunctionKind(settings.TEST_FUNCTION)

    @property
    def is_log_based(self) -> bool:
        return self.kind in (TestFunctionKind.ENTROPY, TestFunctionKind.LIKELIHOOD_RATIO)

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self.is_log_based and np.any(lam <= 0):
            raise DomainError(f"{self.kind.value} requires positive eigenvalues")
        if self.kind == TestFunctionKind.WASSERSTEIN and np.any(lam < 0):
            raise DomainError("wasserstein requires nonnegative eigenvalues")

        if self.kind == TestFunctionKind.CHEBYSHEV:
            return 2.0 * lam ** 2 - 1.0
        if self.kind == TestFunctionKind.ENTROPY:
            return -lam * np.log(lam)
        if self.kind == TestFunctionKind.LIKELIHOOD_RATIO:
            return lam - np.log(lam) - 1.0
        return lam - 2.0 * np.sqrt(lam) + 1.0


class DetectionConfig(BaseModel):
    """Sliding-window detection parameters"""
    model_config = ConfigDict(frozen=True)

    window_width: int = Field(settings.WINDOW_WIDTH, ge=2, description="Window width T")
    history_length: int = Field(settings.HISTORY_LENGTH, ge=3, description="Confidence history T'")
    threshold: float = Field(settings.THRESHOLD, gt=0.0, le=1.0, description="Alarm confidence (1-alpha)_th")
    test_function: TestFunction = Field(default_factory=TestFunction)
    indicator: AlarmIndicator = AlarmIndicator(settings.ALARM_INDICATOR)
    grid: FitGrid = Field(default_factory=FitGrid)
    density: DensityConfig = Field(default_factory=DensityConfig)
    n_jobs: int = Field(settings.N_JOBS, description="Worker processes; 1 runs in-process, -1 all cores")
    top_k: int = Field(settings.TOP_K_CHANNELS, ge=1)
    upward_only: bool = Field(settings.UPWARD_ONLY, description="Only rises of an indicator raise confidence")
    adjust_autocorrelation: bool = Field(
        settings.ADJUST_AUTOCORRELATION, description="Shrink the t degrees of freedom by the lag-1 autocorrelation"
    )
    min_duration: int = Field(settings.MIN_DURATION, ge=1, description="Alarming windows an event needs")
    merge_gap: int = Field(settings.MERGE_GAP, ge=0, description="Quiet windows bridged inside one event")

    @field_validator("test_function", mode="before")
    @classmethod
    def _coerce_test_function(cls, value):
        if isinstance(value, (str, TestFunctionKind)):
            return TestFunction(kind=value)
        return value

    @field_validator("n_jobs")
    @classmethod
    def _check_jobs(cls, value):
        if value == 0:
            raise InvalidSpecError("n_jobs must be nonzero")
        return value


class LocatedChannel(BaseModel):
    index: int
    channel: str
    eta: float
    confidence: float


class AlarmRecord(BaseModel):
    """One merged alarm event: runs of windows above threshold separated by short gaps"""
    time: datetime
    end_time: datetime
    index: int = Field(..., description="Sample index of the first alarming window end")
    end_index: int = Field(..., description="Sample index of the last alarming window end")
    indicator: AlarmIndicator
    confidence: float = Field(..., description="Peak confidence over the event")
    located_channels: List[LocatedChannel] = Field(default_factory=list)
    top_channel: Optional[LocatedChannel] = None

    class Config:
        json_schema_extra = {
            "example": {
                "time": "2020-01-01T00:08:20",
                "end_time": "2020-01-01T00:11:40",
                "index": 500,
                "end_index": 700,
                "indicator": "combined",
                "confidence": 0.99328,
                "located_channels": [
                    {"index": 20, "channel": "bus21", "eta": 14.8, "confidence": 0.99682}
                ],
            }
        }


class WindowFailure(BaseModel):
    end_index: int
    error: str
    message: str


class IndicatorSeries(BaseModel):
    """Per-window indicators and their confidence levels, in window order"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    channels: List[str]
    times: pd.DatetimeIndex
    end_indices: np.ndarray
    p_hat: np.ndarray
    b_hat: np.ndarray
    n_phi: np.ndarray
    min_distance: np.ndarray
    eta: np.ndarray
    confidence: Dict[str, np.ndarray]
    eta_confidence: np.ndarray
    history_ready: np.ndarray

    @field_validator("times", mode="before")
    @classmethod
    def _as_index(cls, value):
        return pd.DatetimeIndex(value)

    @model_validator(mode="after")
    def _check_lengths(self):
        k = len(self.times)
        columns = [self.end_indices, self.p_hat, self.b_hat, self.n_phi, self.min_distance, self.history_ready]
        columns += list(self.confidence.values())
        if any(len(col) != k for col in columns):
            raise InvalidSpecError("indicator series must share one length")
        n = len(self.channels)
        if self.eta.shape != (k, n) or self.eta_confidence.shape != (k, n):
            raise InvalidSpecError(f"eta must be {k}x{n}")
        return self

    @property
    def combined(self) -> np.ndarray:
        return self.n_phi * self.b_hat

    def __len__(self) -> int:
        return len(self.times)

    def to_frame(self, top_k: int = None) -> pd.DataFrame:
        top_k = min(top_k or settings.TOP_K_CHANNELS, len(self.channels))
        frame = pd.DataFrame(
            {
                "time": self.times,
                "end_index": self.end_indices,
                "p_hat": self.p_hat,
                "b_hat": self.b_hat,
                "n_phi": self.n_phi,
                "combined": self.combined,
                "min_distance": self.min_distance,
                "history_ready": self.history_ready,
            }
        )
        for name, values in self.confidence.items():
            frame[f"confidence_{name}"] = values
        order = np.argsort(-self.eta, axis=1, kind="stable")[:, :top_k]
        for rank in range(top_k):
            frame[f"top{rank + 1}_channel"] = [self.channels[i] for i in order[:, rank]]
            frame[f"top{rank + 1}_eta"] = self.eta[np.arange(len(self)), order[:, rank]]
        return frame

    def eta_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.eta, columns=self.channels)
        frame.insert(0, "end_index", self.end_indices)
        frame.insert(0, "time", self.times)
        return frame


class GroundTruthEvent(BaseModel):
    onset: int = Field(..., ge=0, description="Sample index of the anomaly onset")
    end: Optional[int] = None
    label: Optional[str] = None


class EvaluationReport(BaseModel):
    """True detecting rate and false alarming rate; tdr is absent when there is no ground truth"""
    tdr: Optional[float] = None
    far: float
    n_truth: int
    n_correct: int
    n_alarms: int
    tolerance: int

    class Config:
        json_schema_extra = {
            "example": {"tdr": 0.85, "far": 0.1605, "n_truth": 80, "n_correct": 68, "n_alarms": 81, "tolerance": 5}
        }
