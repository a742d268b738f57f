"""
app/api/services/synth.py
Synthetic multichannel datasets: feeder-like baselines, planted step and ramp anomalies
with rank-1 neighbourhood coupling, SNR-scaled AR(1) noise and planted factor models
"""

import logging
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from app.api.models.common import AnomalyKind, TimeSeriesSet
from app.api.models.scenario import AnomalySpec, BaselineSpec, NoiseSpec, RunConfig, ScenarioSpec, parse_anomalies
from app.api.services.spectra import sample_ar1_residuals, sample_ar1_varying
from app.core.config import settings
from app.core.errors import InvalidSpecError

logger = logging.getLogger(__name__)

# Noise rates never reach a unit root
MAX_NOISE_RATE = 0.99


def make_timestamps(n_samples: int, start_time: str = None, period: str = None) -> pd.DatetimeIndex:
    """k-th sample at start_time + k * period"""
    return pd.date_range(
        start=pd.Timestamp(start_time or settings.START_TIME),
        periods=n_samples,
        freq=pd.Timedelta(period or settings.SAMPLING_PERIOD),
    )


def baseline_profile(spec: BaselineSpec, n_channels: int, n_samples: int) -> np.ndarray:
    levels = np.linspace(spec.start_level, spec.end_level, n_channels)
    drift = spec.drift * np.sin(2.0 * np.pi * np.arange(n_samples) / spec.drift_period)
    return levels[:, None] + drift[None, :]


def coupling_loadings(anomaly: AnomalySpec, n_channels: int) -> np.ndarray:
    """Rank-1 loading: 1 on each anomalous channel, gain * decay^distance within the radius."""
    loadings = np.zeros(n_channels)
    for channel in anomaly.channels:
        distance = np.abs(np.arange(n_channels) - channel)
        local = np.where(
            distance <= anomaly.coupling_radius, anomaly.coupling_gain * anomaly.coupling_decay ** distance, 0.0
        )
        local[channel] = 1.0
        loadings = np.maximum(loadings, local)
    return loadings


def anomaly_profile(anomaly: AnomalySpec, n_samples: int) -> np.ndarray:
    """Time course of the mean shift; zero outside [onset, end)."""
    end = anomaly.end if anomaly.end is not None else n_samples
    profile = np.zeros(n_samples)
    if anomaly.kind == AnomalyKind.STEP:
        profile[anomaly.onset:end] = anomaly.magnitude
    else:
        length = end - anomaly.onset
        profile[anomaly.onset:end] = np.linspace(anomaly.initial, anomaly.magnitude, length)
    return profile


def noise_rates(spec: ScenarioSpec) -> Optional[np.ndarray]:
    """
    Per-sample noise AR rates. Coupled channels of an anomaly with persistence move from
    the base rate towards it in proportion to loading * |profile| / max |profile|.
    None when every rate stays at the base rate.
    """
    persistent = [a for a in spec.anomalies if a.persistence is not None]
    if not persistent:
        return None
    n, t = spec.n_channels, spec.n_samples
    rates = np.full((n, t), spec.noise.b)
    for anomaly in persistent:
        strength = np.abs(anomaly_profile(anomaly, t))
        if strength.max() <= 0:
            continue
        stress = np.outer(coupling_loadings(anomaly, n), strength / strength.max())
        rates += (anomaly.persistence - spec.noise.b) * stress
    return np.clip(rates, 0.0, MAX_NOISE_RATE)


def noise_scale(clean: np.ndarray, noise: np.ndarray, snr: float) -> float:
    """m = sqrt(var(D) / (var(E) * SNR))"""
    noise_var = noise.var()
    if noise_var <= 0:
        raise InvalidSpecError("noise matrix has zero variance")
    return float(np.sqrt(clean.var() / (noise_var * snr)))


def generate(spec: ScenarioSpec) -> TimeSeriesSet:
    """Baseline plus coupled anomalies plus (optionally) AR(1) noise scaled to the requested SNR."""
    n, t = spec.n_channels, spec.n_samples
    clean = baseline_profile(spec.baseline, n, t)
    for anomaly in spec.anomalies:
        clean = clean + np.outer(coupling_loadings(anomaly, n), anomaly_profile(anomaly, t))

    values = clean
    if not spec.noise.silent:
        rates = noise_rates(spec)
        if rates is None:
            noise = sample_ar1_residuals(n, t, spec.noise.b, spec.seed)
        else:
            noise = sample_ar1_varying(rates, spec.seed)
        m = noise_scale(clean, noise, spec.noise.snr)
        values = clean + m * noise
        logger.debug(f"Noise scale m={m:.3e} for SNR={spec.noise.snr}")

    logger.info(
        f"Generated {n} x {t} scenario with {len(spec.anomalies)} anomalies "
        f"(b={spec.noise.b}, snr={spec.noise.snr}, seed={spec.seed})"
    )
    return TimeSeriesSet(
        channels=spec.channel_labels,
        timestamps=make_timestamps(t, spec.start_time, spec.sampling_period),
        values=values,
    )


def plant_factors(
    n_channels: int,
    n_samples: int,
    p: int,
    loading_scale: float = 1.0,
    b_resid: float = 0.5,
    seed: Optional[int] = None,
) -> TimeSeriesSet:
    """
    L F + U with p random orthonormal loading directions and unit-variance factor series.

    Factor i carries covariance eigenvalue about loading_scale * N * (1 - 0.5 i / p) above
    the unit-variance AR(1) residual bulk.
    """
    if p < 0 or p >= n_channels:
        raise InvalidSpecError(f"planted factor count p={p} must satisfy 0 <= p < N={n_channels}")
    rng = np.random.default_rng(seed)
    residuals = sample_ar1_residuals(n_channels, n_samples, b_resid, int(rng.integers(2**32)))
    values = residuals
    if p > 0 and loading_scale > 0:
        directions, _ = np.linalg.qr(rng.normal(size=(n_channels, p)))
        strengths = loading_scale * n_channels * (1.0 - 0.5 * np.arange(p) / p)
        loadings = directions * np.sqrt(strengths)
        factors = rng.normal(size=(p, n_samples))
        values = loadings @ factors + residuals
    return TimeSeriesSet(
        channels=[f"ch{i + 1}" for i in range(n_channels)],
        timestamps=make_timestamps(n_samples),
        values=values,
    )


def _preset_case1(seed: Optional[int]) -> ScenarioSpec:
    # 33 buses, step on bus 21 at sampling time 501, felt weakly along eight buses either side
    return ScenarioSpec(
        n_channels=33,
        n_samples=1000,
        channel_prefix="bus",
        anomalies=[
            AnomalySpec(
                kind=AnomalyKind.STEP, channels=[20], onset=500, magnitude=-0.02,
                coupling_radius=8, coupling_decay=0.85, coupling_gain=0.25,
            )
        ],
        noise=NoiseSpec(b=0.5, snr=500.0),
        seed=seed,
    )


_STEP_COUPLING = {"coupling_radius": 8, "coupling_decay": 0.85, "coupling_gain": 0.5}


def _preset_case2_steps(seed: Optional[int]) -> ScenarioSpec:
    return ScenarioSpec(
        n_channels=57,
        n_samples=1000,
        channel_prefix="bus",
        anomalies=[
            AnomalySpec(kind=AnomalyKind.STEP, channels=[19], onset=500, magnitude=-0.02, **_STEP_COUPLING),
            AnomalySpec(kind=AnomalyKind.STEP, channels=[29], onset=510, magnitude=-0.02, **_STEP_COUPLING),
            AnomalySpec(kind=AnomalyKind.STEP, channels=[39], onset=520, magnitude=-0.02, **_STEP_COUPLING),
        ],
        noise=NoiseSpec(b=0.5, snr=500.0),
        seed=seed,
    )


def _preset_case2_ramp(seed: Optional[int]) -> ScenarioSpec:
    # load growing 10 -> 60 on bus 20, expressed as a voltage ramp felt across the feeder;
    # noise on the stressed buses grows more persistent with the load
    return ScenarioSpec(
        n_channels=57,
        n_samples=1000,
        channel_prefix="bus",
        anomalies=[
            AnomalySpec(
                kind=AnomalyKind.RAMP, channels=[19], onset=500, initial=-0.01, magnitude=-0.06,
                coupling_radius=56, coupling_decay=0.97, coupling_gain=1.0, persistence=0.9,
            )
        ],
        noise=NoiseSpec(b=0.5, snr=500.0),
        seed=seed,
    )


def _preset_null(seed: Optional[int]) -> ScenarioSpec:
    return ScenarioSpec(
        n_channels=33,
        n_samples=1000,
        channel_prefix="bus",
        noise=NoiseSpec(b=0.5, snr=500.0),
        seed=seed,
    )


PRESETS = {
    "case1": _preset_case1,
    "case2-steps": _preset_case2_steps,
    "case2-ramp": _preset_case2_ramp,
    "null": _preset_null,
}


def preset(name: str, seed: Optional[int] = None, **overrides) -> ScenarioSpec:
    """Named scenario, optionally with top-level fields replaced."""
    try:
        spec = PRESETS[name](seed)
    except KeyError:
        raise InvalidSpecError(f"unknown scenario '{name}', expected one of {sorted(PRESETS)}") from None
    if overrides:
        spec = ScenarioSpec(**{**spec.model_dump(), **overrides})
    return spec


def ground_truth(spec: ScenarioSpec) -> List[Dict]:
    """One event per planted anomaly, as written to truth files."""
    return [
        {"onset": a.onset, "end": a.end, "label": a.to_compact()}
        for a in sorted(spec.anomalies, key=lambda a: a.onset)
    ]


def scenario_from_config(cfg: RunConfig) -> ScenarioSpec:
    """Preset (with overrides) or a fully specified scenario from run parameters."""
    overrides: Dict = {}
    if cfg.n_channels is not None:
        overrides["n_channels"] = cfg.n_channels
    if cfg.n_samples is not None:
        overrides["n_samples"] = cfg.n_samples
    if cfg.anomalies is not None:
        overrides["anomalies"] = parse_anomalies(cfg.anomalies)
    noise = {}
    if cfg.noise_b is not None:
        noise["b"] = cfg.noise_b
    if cfg.snr is not None:
        noise["snr"] = cfg.snr

    if cfg.scenario:
        spec = preset(cfg.scenario, cfg.seed)
        if noise:
            overrides["noise"] = {**spec.noise.model_dump(), **noise}
        return ScenarioSpec(**{**spec.model_dump(), **overrides}) if overrides else spec

    if cfg.n_channels is None or cfg.n_samples is None:
        raise InvalidSpecError("a scenario preset or both n_channels and n_samples are required")
    return ScenarioSpec(noise=NoiseSpec(**noise), seed=cfg.seed, **overrides)
