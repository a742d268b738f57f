"""
app/api/services/factor_model.py
Principal-component factor removal and spatio-temporal (p, b) estimation
"""

import logging
import time
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from app.api.models.common import Ar1ModelParams, DensityConfig, MpParams, SpectralDensity, StandardizedWindow
from app.api.models.estimation import DensityRecord, EstimationResult, FactorDecomposition, FitGrid, FitReport
from app.api.services.spectra import (
    anchored_edges,
    bin_eigenvalues,
    curve_bin_mass,
    curve_support,
    frv_ar1_curve,
    js_divergence,
    js_rows,
    mp_reference_density,
    spectrum_bin_mass,
    unit_mean_spectrum,
)
from app.api.services.window import covariance, covariance_matrix, eigen_decompose, esd_eigenvalues, standardize_matrix
from app.core.errors import EmptyGridError, InvalidSpecError, RankDeficientError

logger = logging.getLogger(__name__)


class ModelCurve(NamedTuple):
    """Pointwise model density and its support"""
    grid: np.ndarray
    rho: np.ndarray
    lower: float
    upper: float


def extract_factors(
    w: StandardizedWindow,
    p: int,
    eigen: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> FactorDecomposition:
    """
    Remove the top-p principal components of a standardized window.

    F = V^T W holds the factor time series, L = W pinv(F) the loadings and U = W - L F
    the residual. p = 0 leaves the window untouched.
    """
    matrix = w.matrix
    n, t = matrix.shape
    if p < 0 or p >= n:
        raise InvalidSpecError(f"factor count p={p} must satisfy 0 <= p < N={n}")

    values, vectors = eigen if eigen is not None else eigen_decompose(covariance(w))
    if p == 0:
        return FactorDecomposition(
            p=0,
            factors=np.zeros((0, t)),
            loadings=np.zeros((n, 0)),
            residuals=np.array(matrix),
            retained_eigenvalues=np.zeros(0),
            retained_eigenvectors=np.zeros((n, 0)),
        )

    positive = int(np.sum(values > 1e-10 * max(float(values[0]), 1e-300)))
    if positive < p:
        raise RankDeficientError(f"covariance has {positive} positive eigenvalues, fewer than p={p}")

    retained = vectors[:, :p]
    factors = retained.T @ matrix
    loadings = matrix @ linalg.pinv(factors, atol=0.0, rtol=1e-10)
    residuals = matrix - loadings @ factors
    return FactorDecomposition(
        p=p,
        factors=factors,
        loadings=loadings,
        residuals=residuals,
        retained_eigenvalues=np.array(values[:p]),
        retained_eigenvectors=np.array(retained),
    )


def residual_covariance(d: FactorDecomposition, restandardize: bool = True) -> np.ndarray:
    """
    (1/T) U U^T of the residual. With restandardize the rows of U are first brought back to
    zero mean and unit variance, which is the matrix whose spectrum the fit compares.
    """
    if not restandardize:
        return covariance_matrix(d.residuals)
    standardized, _, _ = standardize_matrix(d.residuals)
    return covariance_matrix(standardized)


def residual_eigenvalues(d: FactorDecomposition) -> np.ndarray:
    """Descending ESD of the re-standardized residual covariance."""
    return esd_eigenvalues(residual_covariance(d))


def residual_esd(d: FactorDecomposition, edges: Sequence[float]) -> SpectralDensity:
    return bin_eigenvalues(residual_eigenvalues(d), edges)


def window_esd_vs_mp(
    w: StandardizedWindow, bins: Optional[int] = None
) -> Tuple[SpectralDensity, SpectralDensity, float]:
    """ESD of a standardized window against the M-P law with unit variance, hard-binned."""
    eigs = esd_eigenvalues(covariance(w))
    mp = MpParams(c=w.aspect_ratio, sigma2=1.0)
    bins = bins or DensityConfig().bin_count(len(eigs))
    edges = anchored_edges(eigs, mp.lower, mp.upper, bins)
    empirical = bin_eigenvalues(eigs, edges)
    reference = mp_reference_density(mp, edges)
    return empirical, reference, js_divergence(empirical, reference)


def fit_edges(spectra: Iterable[np.ndarray], c: float, bins: int) -> np.ndarray:
    """Edges shared by every p and b of one window: anchored on the M-P support at c."""
    mp = MpParams(c=c, sigma2=1.0)
    return anchored_edges(np.concatenate(list(spectra)), mp.lower, mp.upper, bins)


class FactorModelService:
    """Fits (p, b) per window; model densities depend only on (b, c) and are cached across p"""

    def __init__(self, density_cfg: Optional[DensityConfig] = None):
        self.density_cfg = density_cfg or DensityConfig()
        self.curve_cache: Dict[Tuple, ModelCurve] = {}
        self.mass_cache: Dict[Tuple, np.ndarray] = {}

    def _cache_key(self, b: float, c: float) -> Tuple:
        cfg = self.density_cfg
        return (
            round(float(b), 10), round(float(c), 12),
            cfg.epsilon, cfg.grid_points, cfg.headroom, cfg.support_tol, cfg.extrapolate,
        )

    def model_curve(self, b: float, c: float) -> ModelCurve:
        key = self._cache_key(b, c)
        cached = self.curve_cache.get(key)
        if cached is not None:
            return cached
        params = Ar1ModelParams(b=float(b), c=float(c), epsilon=self.density_cfg.epsilon)
        grid, rho = frv_ar1_curve(params, self.density_cfg)
        lower, upper = curve_support(grid, rho, self.density_cfg.support_tol)
        curve = ModelCurve(grid=grid, rho=rho, lower=lower, upper=upper)
        self.curve_cache[key] = curve
        return curve

    def model_masses(self, b_grid: Sequence[float], c: float, edges: np.ndarray) -> np.ndarray:
        """Binned model densities, one row per b; edges at fixed c differ only in their count."""
        rows = []
        for b in b_grid:
            key = (self._cache_key(b, c), self.density_cfg.binning, len(edges), round(float(edges[2]), 10), round(float(edges[-1]), 10))
            mass = self.mass_cache.get(key)
            if mass is None:
                curve = self.model_curve(b, c)
                mass = curve_bin_mass(curve.grid, curve.rho, edges, self.density_cfg.binning)
                self.mass_cache[key] = mass
            rows.append(mass)
        return np.vstack(rows)

    def warm_cache(self, b_values: Iterable[float], c: float) -> None:
        """Build every model curve up front so the curve cache is read-only afterwards."""
        b_values = list(b_values)
        missing = [b for b in b_values if self._cache_key(b, c) not in self.curve_cache]
        if not missing:
            return
        started = time.perf_counter()
        for b in missing:
            self.model_curve(b, c)
        logger.info(
            f"Built {len(missing)} model densities at c={c:.4f} in {time.perf_counter() - started:.2f}s"
        )

    def fit_spatio_temporal(
        self,
        w: StandardizedWindow,
        p_range: Sequence[int],
        b_grid: Sequence[float],
        keep_densities: bool = False,
    ) -> EstimationResult:
        """
        Minimize the Jensen-Shannon divergence between the residual ESD and the model density
        over p_range x b_grid. Ties go to the smallest p, then the smallest b.

        Every residual spectrum keeps all N eigenvalues: the p structural zeros share a leading
        bin and the rest are rescaled to mean one. All cells of the window share one set of edges.
        """
        p_range = [int(p) for p in p_range]
        b_grid = sorted({float(b) for b in b_grid})
        if not p_range or not b_grid:
            raise EmptyGridError("p_range and b_grid must both be nonempty")
        n = w.matrix.shape[0]
        if min(p_range) < 0 or max(p_range) >= n:
            raise InvalidSpecError(f"p_range {p_range} must lie within [0, N-1] for N={n}")
        if min(b_grid) < 0 or max(b_grid) >= 1:
            raise InvalidSpecError("b_grid must lie within [0, 1)")

        c = w.aspect_ratio
        eigen = eigen_decompose(covariance(w))
        decompositions: Dict[int, FactorDecomposition] = {}
        spectra: Dict[int, np.ndarray] = {}
        for p in sorted(set(p_range)):
            decompositions[p] = extract_factors(w, p, eigen)
            spectra[p] = unit_mean_spectrum(residual_eigenvalues(decompositions[p]))

        edges = fit_edges(spectra.values(), c, self.density_cfg.bin_count(n))
        masses = self.model_masses(b_grid, c, edges)

        surface: Dict[Tuple[int, float], float] = {}
        empirical: Dict[int, np.ndarray] = {}
        best: Optional[Tuple[float, int, int]] = None
        for p in sorted(spectra):
            empirical[p] = spectrum_bin_mass(spectra[p], edges, self.density_cfg.binning)
            distances = js_rows(empirical[p], masses)
            for b, distance in zip(b_grid, distances):
                surface[(p, b)] = float(distance)
            j = int(np.argmin(distances))
            if best is None or distances[j] < best[0]:
                best = (float(distances[j]), p, j)

        min_distance, p_hat, j_hat = best
        b_hat = b_grid[j_hat]
        logger.debug(f"Window ending at {w.end_index}: p_hat={p_hat}, b_hat={b_hat:.2f}, D={min_distance:.4f}")

        residual_density = model_density = None
        if keep_densities:
            residual_density = SpectralDensity(bin_edges=edges, mass=empirical[p_hat])
            model_density = SpectralDensity(bin_edges=edges, mass=masses[j_hat])

        return EstimationResult(
            p_hat=p_hat,
            b_hat=b_hat,
            min_distance=min_distance,
            distance_surface=surface,
            decomposition=decompositions[p_hat],
            residual_density=residual_density,
            model_density=model_density,
        )


    def fit(self, w: StandardizedWindow, grid: Optional[FitGrid] = None, keep_densities: bool = False) -> EstimationResult:
        grid = grid or FitGrid()
        return self.fit_spatio_temporal(
            w, grid.p_values(w.matrix.shape[0]), grid.b_values(), keep_densities=keep_densities
        )


def _density_records(density: Optional[SpectralDensity]) -> Optional[List[DensityRecord]]:
    if density is None:
        return None
    return [DensityRecord(bin_center=float(c), mass=float(m)) for c, m in zip(density.centers, density.mass)]


def fit_report(
    result: EstimationResult,
    w: StandardizedWindow,
    include_surface: bool = False,
) -> FitReport:
    """JSON-ready summary of one window fit; densities are included when the fit kept them."""
    n, t = w.matrix.shape
    return FitReport(
        p_hat=result.p_hat,
        b_hat=result.b_hat,
        min_distance=result.min_distance,
        end_index=w.end_index,
        end_time=w.end_time.to_pydatetime() if w.end_time is not None else None,
        n_channels=n,
        window_width=t,
        retained_eigenvalues=result.decomposition.retained_eigenvalues,
        distance_surface=result.surface_records() if include_surface else None,
        residual_density=_density_records(result.residual_density),
        model_density=_density_records(result.model_density),
    )
