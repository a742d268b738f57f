"""Tests for principal-component factor removal and (p, b) estimation."""
import numpy as np
import pytest

from app.api.models.common import DataWindow, DensityConfig, MpParams
from app.api.models.estimation import FitGrid
from app.api.services.factor_model import (
    FactorModelService,
    extract_factors,
    fit_report,
    residual_covariance,
    residual_esd,
    window_esd_vs_mp,
)
from app.api.services.spectra import ZERO_EDGE, js_divergence, make_edges, sample_ar1_residuals
from app.api.services.synth import plant_factors
from app.api.services.window import esd_eigenvalues, form_window, standardize_matrix, standardize_rows
from app.core.errors import EmptyGridError, InvalidSpecError, RankDeficientError


def _standardized(values):
    return standardize_rows(DataWindow(matrix=values))


def _planted_window(n=57, t=200, p=3, b_resid=0.5, seed=0):
    data = plant_factors(n, t, p, b_resid=b_resid, seed=seed)
    return standardize_rows(form_window(data, t - 1, t))


@pytest.fixture(scope="module")
def service():
    return FactorModelService()


def test_extract_factors_reconstructs_window(rng):
    w = _standardized(rng.normal(size=(6, 40)))
    for p in range(0, 6):
        d = extract_factors(w, p)
        np.testing.assert_allclose(d.loadings @ d.factors + d.residuals, w.matrix, atol=1e-8)
        assert d.factors.shape == (p, 40)
        assert d.loadings.shape == (6, p)
        np.testing.assert_allclose(d.retained_eigenvectors.T @ d.retained_eigenvectors, np.eye(p), atol=1e-10)


def test_extract_factors_p0_leaves_window(rng):
    w = _standardized(rng.normal(size=(4, 30)))
    d = extract_factors(w, 0)
    np.testing.assert_array_equal(d.residuals, w.matrix)
    assert d.retained_eigenvalues.size == 0


def test_extract_factors_removes_dominant_rank_one(rng):
    signal = np.outer(np.linspace(1.0, 2.0, 10), rng.normal(size=200))
    w = _standardized(signal + 0.01 * rng.normal(size=(10, 200)))
    d = extract_factors(w, 1)
    assert np.linalg.norm(d.residuals) < 0.05 * np.linalg.norm(w.matrix)


def test_extract_factors_rejects_bad_p(rng):
    w = _standardized(rng.normal(size=(4, 30)))
    with pytest.raises(InvalidSpecError):
        extract_factors(w, 4)
    with pytest.raises(InvalidSpecError):
        extract_factors(w, -1)


def test_extract_factors_rank_deficient():
    """Two identical rows and one more: rank 2, so three factors cannot be taken from four rows."""
    base = np.array([[1.0, 2.0, 0.0, 3.0, 1.0, 5.0], [2.0, 1.0, 4.0, 0.0, 3.0, 1.0]])
    w = _standardized(np.vstack([base, base[0], base[1]]))
    with pytest.raises(RankDeficientError):
        extract_factors(w, 3)


def test_residual_spectrum_loses_top_eigenvalues():
    """Without re-standardization the residual spectrum is the window spectrum minus its top p."""
    w = _planted_window(b_resid=0.0, seed=3)
    full = esd_eigenvalues(residual_covariance(extract_factors(w, 0), restandardize=False))
    tops = []
    for p in range(1, 4):
        eigs = esd_eigenvalues(residual_covariance(extract_factors(w, p), restandardize=False))
        np.testing.assert_allclose(eigs[: len(full) - p], full[p:], atol=1e-8)
        tops.append(eigs[0])
    assert tops[0] >= tops[1] >= tops[2]


def test_planted_factor_removal_leaves_noise_bulk():
    w = _planted_window(b_resid=0.0, seed=4)
    d = extract_factors(w, 3)
    edge = MpParams(c=w.aspect_ratio).upper
    assert esd_eigenvalues(residual_covariance(d))[0] < 1.5 * edge


def test_residual_esd_has_unit_mass(rng):
    w = _standardized(rng.normal(size=(8, 50)))
    density = residual_esd(extract_factors(w, 2), make_edges(0.0, 4.0, 10))
    assert density.mass.sum() == pytest.approx(1.0)


def test_white_noise_window_matches_marchenko_pastur():
    w = _standardized(sample_ar1_residuals(100, 500, 0.0, seed=5))
    empirical, reference, distance = window_esd_vs_mp(w)
    assert distance == pytest.approx(js_divergence(empirical, reference))
    assert distance < 0.1


def test_correlated_noise_window_departs_from_marchenko_pastur():
    """The limiting divergence at b = 0.5, c = 0.2 is about 0.05; sampling noise at this size is far smaller."""
    _, _, correlated = window_esd_vs_mp(_standardized(sample_ar1_residuals(200, 1000, 0.5, seed=6)))
    _, _, white = window_esd_vs_mp(_standardized(sample_ar1_residuals(200, 1000, 0.0, seed=7)))
    assert correlated > 0.03
    assert correlated > 5.0 * white


def test_fit_single_cell_surface(service):
    w = _planted_window(p=1, seed=7)
    result = service.fit_spatio_temporal(w, [1], [0.0])
    assert result.p_hat == 1
    assert result.b_hat == 0.0
    assert list(result.distance_surface) == [(1, 0.0)]
    assert result.min_distance == result.distance_surface[(1, 0.0)]


def test_fit_surface_minimum(service):
    w = _planted_window(seed=8)
    grid = FitGrid(p_min=1, p_max=4, b_step=0.1, b_max=0.9)
    result = service.fit(w, grid)
    assert len(result.distance_surface) == 4 * 10
    assert result.min_distance == min(result.distance_surface.values())
    assert result.distance_surface[(result.p_hat, result.b_hat)] == result.min_distance
    assert all(0.0 <= d <= np.log(2) for d in result.distance_surface.values())


def test_fit_ties_go_to_smallest_p_then_b(service):
    """Duplicated b values collapse; identical rows of the surface resolve to the first cell."""
    w = _planted_window(seed=9)
    result = service.fit_spatio_temporal(w, [2, 1], [0.3, 0.3])
    assert sorted(result.distance_surface) == [(1, 0.3), (2, 0.3)]
    if result.distance_surface[(1, 0.3)] == result.distance_surface[(2, 0.3)]:
        assert result.p_hat == 1


def test_fit_is_deterministic(service):
    w = _planted_window(seed=10)
    grid = FitGrid(p_min=1, p_max=3, b_step=0.1, b_max=0.9)
    first, second = service.fit(w, grid), service.fit(w, grid)
    assert first.distance_surface == second.distance_surface
    assert (first.p_hat, first.b_hat) == (second.p_hat, second.b_hat)
    assert FactorModelService().fit(w, grid).distance_surface == first.distance_surface


def test_fit_rejects_empty_and_invalid_grids(service):
    w = _planted_window(seed=11)
    with pytest.raises(EmptyGridError):
        service.fit_spatio_temporal(w, [], [0.5])
    with pytest.raises(EmptyGridError):
        service.fit_spatio_temporal(w, [1], [])
    with pytest.raises(InvalidSpecError):
        service.fit_spatio_temporal(w, [57], [0.5])
    with pytest.raises(InvalidSpecError):
        service.fit_spatio_temporal(w, [1], [1.0])


def test_fit_grid_values():
    grid = FitGrid(p_min=0, p_max=5, b_step=0.01, b_max=0.99)
    assert grid.p_values(57) == [1, 2, 3, 4, 5]
    assert grid.p_values(3) == [1, 2]
    assert FitGrid(p_min=0, p_max=2, include_p0=True).p_values(10) == [0, 1, 2]
    b = grid.b_values()
    assert len(b) == 100
    assert b[0] == 0.0 and b[-1] == 0.99
    with pytest.raises(EmptyGridError):
        FitGrid(p_min=3, p_max=2)


def test_fit_report_with_densities(service):
    w = _planted_window(seed=12)
    grid = FitGrid(p_min=1, p_max=3, b_step=0.25, b_max=0.75)
    result = service.fit(w, grid, keep_densities=True)
    report = fit_report(result, w, include_surface=True)
    assert report.p_hat == result.p_hat
    assert report.n_channels == 57 and report.window_width == 200
    assert len(report.distance_surface) == 3 * 4
    assert len(report.retained_eigenvalues) == result.p_hat
    assert sum(r.mass for r in report.residual_density) == pytest.approx(1.0)
    assert sum(r.mass for r in report.model_density) == pytest.approx(1.0)
    assert js_divergence(result.residual_density, result.model_density) == pytest.approx(result.min_distance)


def test_fit_keeps_structural_zeros_in_leading_bin(service):
    w = _planted_window(seed=13)
    grid = FitGrid(p_min=1, p_max=4, b_step=0.1, b_max=0.9)
    result = service.fit(w, grid, keep_densities=True)
    assert result.residual_density.mass[0] == pytest.approx(result.p_hat / 57)
    assert result.residual_density.bin_edges[1] == ZERO_EDGE
    assert result.model_density.mass[0] < 1e-3


def test_fit_shares_edges_across_cells(service):
    """Every (p, b) cell of one window is scored on the same bins, so model masses are reused."""
    w = _planted_window(seed=14)
    grid = FitGrid(p_min=1, p_max=3, b_step=0.2, b_max=0.8)
    local = FactorModelService()
    local.fit(w, grid)
    assert len(local.mass_cache) == 5
    local.fit(w, grid)
    assert len(local.mass_cache) == 5


def test_hard_binning_fit():
    w = _planted_window(seed=15)
    grid = FitGrid(p_min=1, p_max=4, b_step=0.1, b_max=0.9)
    result = FactorModelService(DensityConfig(binning="hard")).fit(w, grid, keep_densities=True)
    assert all(0.0 <= d <= np.log(2) for d in result.distance_surface.values())
    assert js_divergence(result.residual_density, result.model_density) == pytest.approx(result.min_distance)


def test_model_curves_are_cached(service):
    before = len(service.curve_cache)
    service.warm_cache([0.11, 0.22], 0.5)
    service.warm_cache([0.11, 0.22], 0.5)
    assert len(service.curve_cache) == before + 2


@pytest.mark.slow
def test_white_residuals_give_small_b():
    service = FactorModelService()
    grid = FitGrid(p_min=1, p_max=5, b_step=0.01, b_max=0.99)
    estimates = []
    for seed in range(10):
        w = _standardized(sample_ar1_residuals(57, 200, 0.0, seed=200 + seed))
        estimates.append(service.fit(w, grid).b_hat)
    assert np.mean(estimates) <= 0.1


@pytest.mark.slow
def test_planted_factor_model_recovery():
    """Three strong factors over AR(1) residuals with b = 0.5, N=57, T=200."""
    service = FactorModelService()
    grid = FitGrid(p_min=1, p_max=5, b_step=0.01, b_max=0.99)
    p_hats, b_hats = [], []
    for seed in range(20):
        result = service.fit(_planted_window(seed=300 + seed), grid)
        p_hats.append(result.p_hat)
        b_hats.append(result.b_hat)
    assert sum(p == 3 for p in p_hats) >= 18
    assert np.mean(np.abs(np.array(b_hats) - 0.5)) <= 0.05


def test_standardize_matrix_used_for_residuals(rng):
    """Residual rows are re-standardized before their spectrum is taken."""
    w = _standardized(rng.normal(size=(5, 60)))
    d = extract_factors(w, 1)
    standardized, _, _ = standardize_matrix(d.residuals)
    np.testing.assert_allclose(residual_covariance(d), standardized @ standardized.T / 60)
