"""
app/api/models/scenario.py
Synthetic scenario descriptions and the validated run configuration shared by CLI and API
"""

import math
from typing import List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.api.models.common import AlarmIndicator, AnomalyKind, BinningKind, DensityConfig, TestFunctionKind
from app.api.models.detection import DetectionConfig
from app.api.models.estimation import FitGrid
from app.core.config import settings
from app.core.errors import InvalidSpecError


class AnomalySpec(BaseModel):
    """Mean shift on a set of channels, coupled rank-1 into their neighbourhood"""
    kind: AnomalyKind = AnomalyKind.STEP
    channels: List[int] = Field(..., min_length=1, description="0-based channel indices")
    onset: int = Field(..., ge=0, description="First affected sample index")
    end: Optional[int] = Field(None, description="First unaffected sample index; None runs to the end")
    magnitude: float = Field(..., description="Step size, or ramp value at the end of the interval")
    initial: float = Field(0.0, description="Ramp value at onset")
    coupling_radius: int = Field(3, ge=0)
    coupling_decay: float = Field(0.6, ge=0.0, le=1.0)
    coupling_gain: float = Field(1.0, gt=0.0, le=1.0, description="Loading of the neighbours relative to decay^distance")
    persistence: Optional[float] = Field(
        None, ge=0.0, lt=1.0, description="Noise AR rate the coupled channels approach at full anomaly strength"
    )

    @field_validator("magnitude", "initial")
    @classmethod
    def _finite(cls, value):
        if not math.isfinite(value):
            raise InvalidSpecError(f"anomaly magnitudes must be finite, got {value}")
        return value

    @model_validator(mode="after")
    def _check_interval(self):
        if self.end is not None and self.end <= self.onset:
            raise InvalidSpecError(f"anomaly end {self.end} must come after onset {self.onset}")
        return self

    @classmethod
    def parse(cls, text: str) -> "AnomalySpec":
        """kind@ch[,ch...]:onset[-end]:magnitude[:initial]"""
        try:
            head, *fields = text.strip().split(":")
            kind, channels = head.split("@")
            onset, _, end = fields[0].partition("-")
            return cls(
                kind=kind.strip().lower(),
                channels=[int(ch) for ch in channels.split(",")],
                onset=int(onset),
                end=int(end) if end else None,
                magnitude=float(fields[1]),
                initial=float(fields[2]) if len(fields) > 2 else 0.0,
            )
        except (ValueError, IndexError) as exc:
            raise InvalidSpecError(f"cannot parse anomaly '{text}': {exc}") from exc

    def to_compact(self) -> str:
        interval = f"{self.onset}-{self.end}" if self.end is not None else f"{self.onset}"
        text = f"{self.kind.value}@{','.join(map(str, self.channels))}:{interval}:{self.magnitude:g}"
        return text + (f":{self.initial:g}" if self.initial else "")


def parse_anomalies(text: Optional[str]) -> List[AnomalySpec]:
    if not text:
        return []
    return [AnomalySpec.parse(part) for part in text.split(";") if part.strip()]


class NoiseSpec(BaseModel):
    b: float = Field(0.5, ge=0.0, lt=1.0, description="AR(1) rate of the added noise")
    snr: Optional[float] = Field(500.0, description="var(signal) / var(noise); None or inf adds no noise")

    @field_validator("snr")
    @classmethod
    def _check_snr(cls, value):
        if value is not None and not value > 0:
            raise InvalidSpecError(f"snr must be positive, got {value}")
        return value

    @property
    def silent(self) -> bool:
        return self.snr is None or math.isinf(self.snr)


class BaselineSpec(BaseModel):
    """Per-channel levels falling linearly along the feeder, with an optional slow drift"""
    start_level: float = 1.0
    end_level: float = 0.95
    drift: float = Field(0.0, ge=0.0, description="Amplitude of a shared slow sinusoid")
    drift_period: int = Field(1000, ge=2)


class ScenarioSpec(BaseModel):
    n_channels: int = Field(..., ge=2)
    n_samples: int = Field(..., ge=2)
    channel_prefix: str = "ch"
    baseline: BaselineSpec = Field(default_factory=BaselineSpec)
    anomalies: List[AnomalySpec] = Field(default_factory=list)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    seed: Optional[int] = None
    start_time: str = settings.START_TIME
    sampling_period: str = settings.SAMPLING_PERIOD

    @field_validator("anomalies", mode="before")
    @classmethod
    def _parse_compact(cls, value):
        return parse_anomalies(value) if isinstance(value, str) else value

    @model_validator(mode="after")
    def _check_anomalies(self):
        for anomaly in self.anomalies:
            if anomaly.onset >= self.n_samples:
                raise InvalidSpecError(f"onset {anomaly.onset} outside [0, {self.n_samples})")
            if anomaly.end is not None and anomaly.end > self.n_samples:
                raise InvalidSpecError(f"anomaly end {anomaly.end} beyond {self.n_samples} samples")
            bad = [ch for ch in anomaly.channels if not 0 <= ch < self.n_channels]
            if bad:
                raise InvalidSpecError(f"anomaly channels {bad} outside [0, {self.n_channels})")
        return self

    @property
    def channel_labels(self) -> List[str]:
        return [f"{self.channel_prefix}{i + 1}" for i in range(self.n_channels)]


class RunConfig(BaseModel):
    """Flat, validated parameters of one CLI or API run; unknown keys are rejected"""
    model_config = ConfigDict(extra="forbid")

    # IO
    input: Optional[str] = None
    output: Optional[str] = None
    alarms: Optional[str] = None
    truth: Optional[str] = None
    report: Optional[str] = None

    # Scenario
    scenario: Optional[str] = None
    n_channels: Optional[int] = Field(None, ge=2)
    n_samples: Optional[int] = Field(None, ge=2)
    anomalies: Optional[str] = None
    snr: Optional[float] = None
    noise_b: Optional[float] = Field(None, ge=0.0, lt=1.0)
    seed: Optional[int] = None

    # Detection
    window_width: int = Field(settings.WINDOW_WIDTH, ge=2)
    history_length: int = Field(settings.HISTORY_LENGTH, ge=3)
    threshold: float = Field(settings.THRESHOLD, gt=0.0, le=1.0)
    test_function: TestFunctionKind = TestFunctionKind(settings.TEST_FUNCTION)
    indicator: AlarmIndicator = AlarmIndicator(settings.ALARM_INDICATOR)
    top_k: int = Field(settings.TOP_K_CHANNELS, ge=1)
    n_jobs: int = settings.N_JOBS
    upward_only: bool = settings.UPWARD_ONLY
    adjust_autocorrelation: bool = settings.ADJUST_AUTOCORRELATION
    min_duration: int = Field(settings.MIN_DURATION, ge=1)
    merge_gap: int = Field(settings.MERGE_GAP, ge=0)
    tolerance: int = Field(settings.MATCH_TOLERANCE, ge=0)
    end_index: Optional[int] = None

    # Fit grid and densities
    p_min: int = Field(settings.P_MIN, ge=0)
    p_max: int = Field(settings.P_MAX, ge=0)
    b_step: float = Field(settings.B_STEP, gt=0.0, lt=1.0)
    b_max: float = Field(settings.B_MAX, ge=0.0, lt=1.0)
    include_p0: bool = False
    epsilon: float = Field(settings.EPSILON, gt=0.0)
    grid_points: int = Field(settings.GRID_POINTS, ge=50)
    bins: Union[int, str] = settings.BINS
    binning: BinningKind = BinningKind(settings.BINNING)
    extrapolate: bool = settings.EXTRAPOLATE
    surface: bool = False
    densities: bool = False

    def fit_grid(self) -> FitGrid:
        return FitGrid(
            p_min=self.p_min,
            p_max=self.p_max,
            b_step=self.b_step,
            b_max=self.b_max,
            include_p0=self.include_p0,
        )

    def density_config(self) -> DensityConfig:
        return DensityConfig(
            epsilon=self.epsilon,
            grid_points=self.grid_points,
            bins=self.bins,
            binning=self.binning,
            extrapolate=self.extrapolate,
        )

    def detection_config(self) -> DetectionConfig:
        return DetectionConfig(
            window_width=self.window_width,
            history_length=self.history_length,
            threshold=self.threshold,
            test_function=self.test_function,
            indicator=self.indicator,
            grid=self.fit_grid(),
            density=self.density_config(),
            n_jobs=self.n_jobs,
            top_k=self.top_k,
            upward_only=self.upward_only,
            adjust_autocorrelation=self.adjust_autocorrelation,
            min_duration=self.min_duration,
            merge_gap=self.merge_gap,
        )
