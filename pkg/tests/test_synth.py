"""Tests for synthetic scenario generation."""
import numpy as np
import pytest

from app.api.models.common import AnomalyKind
from app.api.models.scenario import AnomalySpec, BaselineSpec, NoiseSpec, RunConfig, ScenarioSpec, parse_anomalies
from app.api.services.synth import (
    anomaly_profile,
    baseline_profile,
    coupling_loadings,
    generate,
    ground_truth,
    make_timestamps,
    noise_rates,
    plant_factors,
    preset,
    scenario_from_config,
)
from app.core.errors import InvalidSpecError


def _spec(**kwargs):
    base = dict(n_channels=6, n_samples=80, anomalies="step@2:40:-0.05", seed=5)
    base.update(kwargs)
    return ScenarioSpec(**base)


def test_silent_noise_returns_clean_signal():
    spec = _spec(noise=NoiseSpec(snr=None))
    data = generate(spec)
    clean = baseline_profile(spec.baseline, 6, 80)
    clean += np.outer(coupling_loadings(spec.anomalies[0], 6), anomaly_profile(spec.anomalies[0], 80))
    np.testing.assert_array_equal(data.values, clean)
    np.testing.assert_array_equal(generate(_spec(noise=NoiseSpec(snr=float("inf")))).values, clean)


def test_noise_scaled_to_snr():
    clean = generate(_spec(noise=NoiseSpec(snr=None))).values
    noisy = generate(_spec(noise=NoiseSpec(b=0.5, snr=500.0))).values
    ratio = (noisy - clean).var() / clean.var()
    assert ratio == pytest.approx(1.0 / 500.0, rel=1e-9)


def test_generation_is_deterministic():
    first, second = generate(_spec()), generate(_spec())
    np.testing.assert_array_equal(first.values, second.values)
    assert not np.array_equal(first.values, generate(_spec(seed=6)).values)


def test_channel_labels_and_timestamps():
    data = generate(_spec(channel_prefix="bus"))
    assert data.channels == [f"bus{i}" for i in range(1, 7)]
    assert data.timestamps[0].isoformat() == "2020-01-01T00:00:00"
    assert (data.timestamps[1] - data.timestamps[0]).total_seconds() == 1.0


def test_make_timestamps_custom_clock():
    stamps = make_timestamps(3, "2021-06-01T12:00:00", "15min")
    assert [t.isoformat() for t in stamps] == [
        "2021-06-01T12:00:00",
        "2021-06-01T12:15:00",
        "2021-06-01T12:30:00",
    ]


def test_baseline_falls_along_feeder():
    profile = baseline_profile(BaselineSpec(), 3, 4)
    np.testing.assert_allclose(profile[:, 0], [1.0, 0.975, 0.95])
    assert np.all(profile == profile[:, :1])


def test_coupling_loadings_decay_with_distance():
    loadings = coupling_loadings(AnomalySpec(channels=[20], onset=0, magnitude=1.0), 33)
    assert loadings[20] == 1.0
    assert loadings[19] == loadings[21] == pytest.approx(0.6)
    assert loadings[17] == pytest.approx(0.216)
    assert loadings[16] == 0.0 and loadings[24] == 0.0


def test_coupling_gain_scales_neighbours_only():
    anomaly = AnomalySpec(channels=[20], onset=0, magnitude=1.0, coupling_radius=8, coupling_decay=0.85, coupling_gain=0.25)
    loadings = coupling_loadings(anomaly, 33)
    assert loadings[20] == 1.0
    assert loadings[19] == loadings[21] == pytest.approx(0.25 * 0.85)
    assert loadings[28] == pytest.approx(0.25 * 0.85 ** 8)
    assert loadings[11] == 0.0 and loadings[29] == 0.0


def test_anomaly_profiles():
    step = anomaly_profile(AnomalySpec(channels=[0], onset=3, end=6, magnitude=-2.0), 8)
    np.testing.assert_array_equal(step, [0, 0, 0, -2, -2, -2, 0, 0])
    ramp = AnomalySpec(kind="ramp", channels=[0], onset=2, magnitude=-0.06, initial=-0.01)
    profile = anomaly_profile(ramp, 8)
    np.testing.assert_allclose(profile[2:], np.linspace(-0.01, -0.06, 6))
    np.testing.assert_array_equal(profile[:2], 0.0)


def test_parse_compact_anomalies():
    step, ramp = parse_anomalies("step@20:500:-0.02; ramp@19,21:500-900:-0.06:-0.01")
    assert step.kind == AnomalyKind.STEP
    assert (step.channels, step.onset, step.end, step.magnitude) == ([20], 500, None, -0.02)
    assert ramp.kind == AnomalyKind.RAMP
    assert (ramp.channels, ramp.end, ramp.initial) == ([19, 21], 900, -0.01)
    assert AnomalySpec.parse(ramp.to_compact()) == ramp
    assert parse_anomalies("") == []


@pytest.mark.parametrize("text", ["bogus", "step@x:1:2", "step@1:5", "wave@1:5:1.0", "step@1:9-3:1.0"])
def test_parse_rejects_malformed(text):
    with pytest.raises(InvalidSpecError):
        AnomalySpec.parse(text)


def test_scenario_validation():
    with pytest.raises(InvalidSpecError):
        _spec(anomalies="step@2:80:-0.05")
    with pytest.raises(InvalidSpecError):
        _spec(anomalies="step@6:10:-0.05")
    with pytest.raises(InvalidSpecError):
        _spec(anomalies="step@2:10-90:-0.05")
    with pytest.raises(InvalidSpecError):
        NoiseSpec(snr=0.0)
    with pytest.raises(InvalidSpecError):
        AnomalySpec(channels=[0], onset=0, magnitude=float("nan"))


def test_presets():
    case1 = preset("case1", seed=1)
    assert (case1.n_channels, case1.n_samples) == (33, 1000)
    assert case1.anomalies[0].channels == [20] and case1.anomalies[0].onset == 500
    steps = preset("case2-steps")
    assert [a.onset for a in steps.anomalies] == [500, 510, 520]
    assert [e["onset"] for e in ground_truth(steps)] == [500, 510, 520]
    assert preset("null").anomalies == []
    assert preset("case1", n_samples=600).n_samples == 600
    data = generate(preset("case2-ramp", seed=2))
    assert data.values.shape == (57, 1000)
    assert data.channels[19] == "bus20"
    with pytest.raises(InvalidSpecError):
        preset("case9")


def test_scenario_from_config():
    spec = scenario_from_config(RunConfig(scenario="case1", seed=3, snr=100.0, n_samples=700))
    assert spec.noise.snr == 100.0 and spec.noise.b == 0.5
    assert spec.n_samples == 700 and spec.seed == 3

    custom = scenario_from_config(RunConfig(n_channels=4, n_samples=30, anomalies="step@1:10:0.5", noise_b=0.2))
    assert custom.n_channels == 4 and custom.noise.b == 0.2
    assert custom.anomalies[0].onset == 10

    with pytest.raises(InvalidSpecError):
        scenario_from_config(RunConfig())


def test_plant_factors():
    data = plant_factors(10, 50, 2, seed=4)
    assert data.values.shape == (10, 50)
    np.testing.assert_array_equal(data.values, plant_factors(10, 50, 2, seed=4).values)
    with pytest.raises(InvalidSpecError):
        plant_factors(5, 50, 5)


# ---------------------------------------------------------------------------
# Persistent noise under load
# ---------------------------------------------------------------------------

def test_noise_rates_follow_stress():
    spec = _spec(anomalies=[AnomalySpec(kind="ramp", channels=[2], onset=40, initial=-0.01, magnitude=-0.05,
                                        coupling_radius=1, coupling_decay=0.5, persistence=0.9)])
    rates = noise_rates(spec)
    assert rates.shape == (6, 80)
    np.testing.assert_array_equal(rates[:, :40], 0.5)
    assert rates[2, 79] == pytest.approx(0.9)
    assert rates[1, 79] == pytest.approx(0.5 + 0.4 * 0.5)
    np.testing.assert_array_equal(rates[4:, :], 0.5)
    assert np.all(np.diff(rates[2, 40:]) > 0)


def test_noise_rates_absent_without_persistence():
    assert noise_rates(_spec()) is None


def test_persistent_noise_raises_lag_one_autocorrelation():
    anomaly = AnomalySpec(channels=[0, 1, 2, 3, 4, 5], onset=2000, magnitude=-0.05, coupling_radius=0, persistence=0.9)
    spec = ScenarioSpec(n_channels=6, n_samples=4000, anomalies=[anomaly], seed=8)
    values = generate(spec).values

    def lag_one(block):
        centred = block - block.mean(axis=1, keepdims=True)
        return float(np.mean(np.sum(centred[:, 1:] * centred[:, :-1], axis=1) / np.sum(centred ** 2, axis=1)))

    assert lag_one(values[:, :2000]) == pytest.approx(0.5, abs=0.05)
    assert lag_one(values[:, 2000:]) == pytest.approx(0.9, abs=0.05)
    np.testing.assert_array_equal(values, generate(spec).values)
