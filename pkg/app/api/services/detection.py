"""
app/api/services/detection.py
Sliding-window spatio-temporal detection: indicators, location, confidence levels,
alarm merging and TDR/FAR evaluation
"""

import logging
import time
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import stats

from app.api.models.common import AlarmIndicator, TimeSeriesSet
from app.api.models.detection import (
    AlarmRecord,
    DetectionConfig,
    EvaluationReport,
    GroundTruthEvent,
    IndicatorSeries,
    LocatedChannel,
    TestFunction,
    WindowFailure,
)
from app.api.services.factor_model import FactorModelService
from app.api.services.stats_tracker import stats_tracker
from app.api.services.window import form_window, standardize_rows
from app.core.config import settings
from app.core.errors import (
    AnalysisError,
    AspectRatioError,
    InsufficientDataError,
    NumericalError,
    ShapeMismatchError,
)

logger = logging.getLogger(__name__)

# Reported confidence never reaches 1; a threshold of 1.0 is unreachable
MAX_CONFIDENCE = float(np.nextafter(1.0, 0.0))


def partial_les(eigenvalues: Sequence[float], phi: TestFunction) -> float:
    """N_phi = sum of phi over the retained eigenvalues"""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    if eigenvalues.size == 0:
        return 0.0
    return float(np.sum(phi(eigenvalues)))


def location_indicator(eigenvalues: Sequence[float], eigenvectors: np.ndarray) -> np.ndarray:
    """eta = sum_i lambda_i |v_i|, elementwise"""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    eigenvectors = np.asarray(eigenvectors, dtype=float)
    if eigenvectors.ndim != 2 or eigenvectors.shape[1] != eigenvalues.size:
        raise ShapeMismatchError(
            f"{eigenvalues.size} eigenvalues do not match eigenvector matrix of shape {eigenvectors.shape}"
        )
    return np.abs(eigenvectors) @ eigenvalues


def contribution_identity_check(eigenvector: Sequence[float]) -> np.ndarray:
    """Per-row contributions v_j^2 of a unit eigenvector; they sum to one."""
    eigenvector = np.asarray(eigenvector, dtype=float)
    return eigenvector ** 2


def t_confidence(statistic: float, dof: float) -> float:
    """Two-sided Student-t confidence P(|T| <= |t|)."""
    return float(min(2.0 * stats.t.cdf(abs(statistic), dof) - 1.0, MAX_CONFIDENCE))


def effective_dof(history: Sequence[float]) -> float:
    """
    Degrees of freedom of a history with lag-1 autocorrelation r1:
    n (1 - r1) / (1 + r1) - 1, kept within [1, n - 1]. Uncorrelated or anticorrelated
    histories keep n - 1.
    """
    history = np.asarray(history, dtype=float)
    n = history.size
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.corrcoef(history[1:], history[:-1])[0, 1]
    return float(_effective_size(np.array([r1]), n)[0] - 1.0)


def _effective_size(r1: np.ndarray, n: int) -> np.ndarray:
    r1 = np.where(np.isfinite(r1), r1, 0.0)
    r1 = np.clip(r1, 0.0, 1.0 - 1e-12)
    return np.clip(n * (1.0 - r1) / (1.0 + r1), 2.0, n)


class ConfidenceResult(NamedTuple):
    value: float
    statistic: float
    degenerate: bool


def confidence_level(
    history: Sequence[float], adjust_autocorrelation: bool = False, upward_only: bool = False
) -> ConfidenceResult:
    """
    Standardize the last value of the history by the history's mean and sample standard
    deviation and map it to a two-sided t confidence with len(history) - 1 degrees of freedom,
    or the autocorrelation-corrected count. With upward_only a value at or below the mean
    reports confidence 0. A constant history carries no evidence of change and reports 0.
    """
    history = np.asarray(history, dtype=float)
    if history.size < 3:
        raise InsufficientDataError(f"confidence needs at least 3 values, got {history.size}")
    mean = history.mean()
    std = history.std(ddof=1)
    if not std > 1e-12 * max(abs(mean), 1.0):
        return ConfidenceResult(0.0, 0.0, True)
    statistic = float((history[-1] - mean) / std)
    if upward_only and statistic <= 0:
        return ConfidenceResult(0.0, statistic, False)
    dof = effective_dof(history) if adjust_autocorrelation else history.size - 1
    return ConfidenceResult(t_confidence(statistic, dof), statistic, False)


def rolling_confidence(
    values: np.ndarray,
    history_length: int,
    adjust_autocorrelation: bool = False,
    upward_only: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """Confidence of each value against the trailing history ending at it; warm-up entries are 0."""
    values = np.asarray(values, dtype=float)
    frame = pd.DataFrame(values.reshape(values.shape[0], -1))
    rolling = frame.rolling(history_length, min_periods=history_length)
    mean = rolling.mean().to_numpy()
    std = rolling.std(ddof=1).to_numpy()
    ready = ~np.isnan(mean)
    degenerate = ready & ~(std > 1e-12 * np.maximum(np.abs(np.nan_to_num(mean)), 1.0))
    usable = ready & ~degenerate
    statistic = np.zeros(frame.shape)
    statistic[usable] = (frame.to_numpy()[usable] - mean[usable]) / std[usable]

    dof = np.full(frame.shape, float(history_length - 1))
    if adjust_autocorrelation:
        r1 = frame.rolling(history_length - 1, min_periods=history_length - 1).corr(frame.shift(1))
        dof = _effective_size(r1.to_numpy(), history_length) - 1.0
    if upward_only:
        usable &= statistic > 0

    confidence = np.zeros(frame.shape)
    confidence[usable] = 2.0 * stats.t.cdf(np.abs(statistic[usable]), dof[usable]) - 1.0
    confidence = np.minimum(confidence, MAX_CONFIDENCE)
    return confidence.reshape(values.shape), degenerate.reshape(values.shape)


class WindowEvaluation(NamedTuple):
    end_index: int
    p_hat: int
    b_hat: float
    min_distance: float
    n_phi: float
    eta: np.ndarray


def _evaluate_chunk(
    service: FactorModelService,
    data: TimeSeriesSet,
    end_indices: Sequence[int],
    cfg: DetectionConfig,
) -> List[Union[WindowEvaluation, WindowFailure]]:
    results: List[Union[WindowEvaluation, WindowFailure]] = []
    for end_index in end_indices:
        try:
            window = standardize_rows(form_window(data, int(end_index), cfg.window_width))
            fit = service.fit(window, cfg.grid)
            decomposition = fit.decomposition
            results.append(
                WindowEvaluation(
                    end_index=int(end_index),
                    p_hat=fit.p_hat,
                    b_hat=fit.b_hat,
                    min_distance=fit.min_distance,
                    n_phi=partial_les(decomposition.retained_eigenvalues, cfg.test_function),
                    eta=location_indicator(
                        decomposition.retained_eigenvalues, decomposition.retained_eigenvectors
                    ),
                )
            )
        except AnalysisError as exc:
            results.append(
                WindowFailure(end_index=int(end_index), error=type(exc).__name__, message=str(exc))
            )
    return results


class DetectionRun(NamedTuple):
    series: IndicatorSeries
    alarms: List[AlarmRecord]
    failures: List[WindowFailure]


class DetectionService:
    def __init__(self, factor_service: Optional[FactorModelService] = None):
        self.factor_service = factor_service

    def _service_for(self, cfg: DetectionConfig) -> FactorModelService:
        if self.factor_service is None or self.factor_service.density_cfg != cfg.density:
            self.factor_service = FactorModelService(cfg.density)
        return self.factor_service

    def evaluate_windows(
        self, data: TimeSeriesSet, cfg: DetectionConfig
    ) -> Tuple[List[WindowEvaluation], List[WindowFailure]]:
        width = cfg.window_width
        if data.n_samples < width:
            raise InsufficientDataError(f"{data.n_samples} samples cannot fill a window of width {width}")
        if data.n_channels > width:
            raise AspectRatioError(f"aspect ratio c = N/T = {data.n_channels}/{width} exceeds 1")
        service = self._service_for(cfg)
        service.warm_cache(cfg.grid.b_values(), data.n_channels / width)

        end_indices = np.arange(width - 1, data.n_samples)
        n_jobs = cfg.n_jobs if cfg.n_jobs > 0 else (settings.N_JOBS or 1)
        chunks = [c for c in np.array_split(end_indices, max(1, min(n_jobs, len(end_indices)))) if len(c)]
        if len(chunks) == 1:
            batches = [_evaluate_chunk(service, data, chunks[0], cfg)]
        else:
            batches = Parallel(n_jobs=len(chunks))(
                delayed(_evaluate_chunk)(service, data, chunk, cfg) for chunk in chunks
            )

        evaluations: List[WindowEvaluation] = []
        failures: List[WindowFailure] = []
        for batch in batches:
            for item in batch:
                (failures if isinstance(item, WindowFailure) else evaluations).append(item)
        for failure in failures:
            logger.warning(f"Window ending at {failure.end_index} skipped: {failure.error}: {failure.message}")
        return evaluations, failures

    def build_series(
        self, data: TimeSeriesSet, evaluations: List[WindowEvaluation], cfg: DetectionConfig
    ) -> IndicatorSeries:
        k = len(evaluations)
        end_indices = np.array([e.end_index for e in evaluations], dtype=int)
        n_phi = np.array([e.n_phi for e in evaluations], dtype=float)
        b_hat = np.array([e.b_hat for e in evaluations], dtype=float)
        eta = np.array([e.eta for e in evaluations], dtype=float).reshape(k, data.n_channels)

        confidence: Dict[str, np.ndarray] = {}
        degenerate_total = 0
        for name, values in (
            (AlarmIndicator.N_PHI.value, n_phi),
            (AlarmIndicator.B_HAT.value, b_hat),
            (AlarmIndicator.COMBINED.value, n_phi * b_hat),
        ):
            confidence[name], degenerate = rolling_confidence(
                values, cfg.history_length, cfg.adjust_autocorrelation, cfg.upward_only
            )
            degenerate_total += int(degenerate.sum())
        eta_confidence, _ = rolling_confidence(eta, cfg.history_length, cfg.adjust_autocorrelation, cfg.upward_only)
        if degenerate_total:
            logger.warning(f"{degenerate_total} indicator histories had zero variance; confidence set to 0")

        ready = np.arange(k) >= cfg.history_length - 1
        return IndicatorSeries(
            channels=list(data.channels),
            times=data.timestamps[end_indices] if k else data.timestamps[:0],
            end_indices=end_indices,
            p_hat=np.array([e.p_hat for e in evaluations], dtype=int),
            b_hat=b_hat,
            n_phi=n_phi,
            min_distance=np.array([e.min_distance for e in evaluations], dtype=float),
            eta=eta,
            confidence=confidence,
            eta_confidence=eta_confidence,
            history_ready=ready,
        )

    def merge_alarms(self, series: IndicatorSeries, cfg: DetectionConfig) -> List[AlarmRecord]:
        """
        Windows at or above threshold form runs; runs at most merge_gap windows apart join one
        event, and events with fewer than min_duration alarming windows are dropped.
        """
        driving = series.confidence[cfg.indicator.value]
        above = np.flatnonzero(series.history_ready & (driving >= cfg.threshold))
        if above.size == 0:
            return []
        breaks = np.flatnonzero(np.diff(above) > cfg.merge_gap + 1)
        starts = np.concatenate([[0], breaks + 1])
        stops = np.concatenate([breaks, [above.size - 1]])
        alarms: List[AlarmRecord] = []
        for first, last in zip(starts, stops):
            if last - first + 1 < cfg.min_duration:
                continue
            alarms.append(self._alarm(series, cfg, int(above[first]), int(above[last]), driving))
        return alarms

    def _alarm(
        self, series: IndicatorSeries, cfg: DetectionConfig, start: int, stop: int, driving: np.ndarray
    ) -> AlarmRecord:
        def located(j: int) -> LocatedChannel:
            return LocatedChannel(
                index=j,
                channel=series.channels[j],
                eta=float(series.eta[start, j]),
                confidence=float(series.eta_confidence[start, j]),
            )

        flagged = np.flatnonzero(series.eta_confidence[start] >= cfg.threshold)
        flagged = flagged[np.argsort(-series.eta_confidence[start, flagged], kind="stable")]
        return AlarmRecord(
            time=series.times[start].to_pydatetime(),
            end_time=series.times[stop].to_pydatetime(),
            index=int(series.end_indices[start]),
            end_index=int(series.end_indices[stop]),
            indicator=cfg.indicator,
            confidence=float(driving[start:stop + 1].max()),
            located_channels=[located(int(j)) for j in flagged],
            top_channel=located(int(np.argmax(series.eta[start]))),
        )

    def run_detection(self, data: TimeSeriesSet, cfg: Optional[DetectionConfig] = None) -> DetectionRun:
        """Evaluate every window, derive confidences over trailing histories and emit merged alarms."""
        cfg = cfg or DetectionConfig()
        if data.n_samples < cfg.window_width + cfg.history_length:
            raise InsufficientDataError(
                f"detection needs at least T + T' = {cfg.window_width + cfg.history_length} samples, "
                f"got {data.n_samples}"
            )
        started = time.perf_counter()
        logger.info(
            f"Detection over {data.n_channels} channels x {data.n_samples} samples "
            f"(T={cfg.window_width}, T'={cfg.history_length}, threshold={cfg.threshold})"
        )
        evaluations, failures = self.evaluate_windows(data, cfg)
        if not evaluations:
            raise NumericalError(f"all {len(failures)} windows failed; first error: {failures[0].message}")
        series = self.build_series(data, evaluations, cfg)
        alarms = self.merge_alarms(series, cfg)

        elapsed = time.perf_counter() - started
        stats_tracker.record_run(len(evaluations), len(failures), len(alarms), elapsed)
        logger.info(
            f"Evaluated {len(evaluations)} windows ({len(failures)} failed) in {elapsed:.1f}s, "
            f"{len(alarms)} alarm events"
        )
        return DetectionRun(series=series, alarms=alarms, failures=failures)


def evaluate_tdr_far(
    alarms: Sequence[AlarmRecord],
    ground_truth: Sequence[GroundTruthEvent],
    tolerance: int = None,
) -> EvaluationReport:
    """
    Alarms and truths are matched greedily in time order; an alarm matches the earliest
    unmatched event whose onset lies within tolerance samples of the alarm start.
    """
    tolerance = settings.MATCH_TOLERANCE if tolerance is None else int(tolerance)
    onsets = sorted(event.onset for event in ground_truth)
    matched = [False] * len(onsets)
    n_correct = 0
    for alarm in sorted(alarms, key=lambda a: a.index):
        for i, onset in enumerate(onsets):
            if not matched[i] and abs(alarm.index - onset) <= tolerance:
                matched[i] = True
                n_correct += 1
                break
    return tdr_far_from_counts(len(onsets), n_correct, len(alarms), tolerance)


def tdr_far_from_counts(n_truth: int, n_correct: int, n_alarms: int, tolerance: int = 0) -> EvaluationReport:
    return EvaluationReport(
        tdr=n_correct / n_truth if n_truth else None,
        far=(n_alarms - n_correct) / n_alarms if n_alarms else 0.0,
        n_truth=n_truth,
        n_correct=n_correct,
        n_alarms=n_alarms,
        tolerance=tolerance,
    )
