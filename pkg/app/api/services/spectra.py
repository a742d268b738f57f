"""
app/api/services/spectra.py
Reference spectral densities: Marchenko-Pastur law, the free-probability density of
AR(1)-correlated sample covariance matrices, histogramming and the Jensen-Shannon distance.
"""

import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, signal, special

from app.api.models.common import Ar1ModelParams, BinningKind, DensityConfig, MpParams, SpectralDensity
from app.core.errors import (
    BinMismatchError,
    BranchPointError,
    DegenerateCoefficientsError,
    DomainError,
    InvalidSpecError,
    NumericalError,
)

logger = logging.getLogger(__name__)

LN2 = float(np.log(2.0))

# Far-field continuation used to pick the physical branch before entering the grid
_CONTINUATION_POINTS = 64
_CONTINUATION_REACH = 50.0

# Cap on anchored bins, as a multiple of the requested count
MAX_BIN_FACTOR = 10

# Eigenvalues below this are structural zeros of a factor-removed covariance
ZERO_EDGE = 1e-8


# ---------------------------------------------------------------------------
# Marchenko-Pastur law
# ---------------------------------------------------------------------------

def mp_density(p: MpParams, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """f_MP(x) = sqrt((b - x)(x - a)) / (2 pi c sigma^2 x) on [a, b], zero elsewhere."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    inside = (xs >= p.lower) & (xs <= p.upper) & (xs > 0)
    out = np.zeros_like(xs)
    xi = xs[inside]
    out[inside] = np.sqrt(np.clip((p.upper - xi) * (xi - p.lower), 0.0, None)) / (
        2.0 * np.pi * p.c * p.sigma2 * xi
    )
    return float(out[0]) if np.ndim(x) == 0 else out


def mp_reference_density(p: MpParams, edges: np.ndarray) -> SpectralDensity:
    """Binned M-P law, one quadrature per bin."""
    edges = np.asarray(edges, dtype=float)
    mass = np.zeros(len(edges) - 1)
    for k, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        lo, hi = max(lo, p.lower), min(hi, p.upper)
        if hi > lo:
            mass[k], _ = integrate.quad(lambda t: mp_density(p, t), lo, hi, limit=200)
    total = mass.sum()
    if total <= 0:
        raise NumericalError("M-P law has no mass on the requested bins")
    return SpectralDensity(bin_edges=edges, mass=mass / total)


# ---------------------------------------------------------------------------
# Quartic for the moment generating function of the AR(1) model
# ---------------------------------------------------------------------------

def quartic_coefficients(z, b: float, c: float) -> np.ndarray:
    """Coefficients (highest power first) of the quartic in M; broadcasts over z."""
    z = np.asarray(z, dtype=complex)
    a2 = 1.0 - b * b
    a4 = a2 * a2
    coeffs = np.stack(
        np.broadcast_arrays(
            a4 * c * c + 0 * z,
            2.0 * a2 * c * (-(1.0 + b * b) * z + a2 * c),
            a4 * z * z - 2.0 * a2 * c * (1.0 + b * b) * z + (c * c - 1.0) * a4,
            -2.0 * a4 + 0 * z,
            -a4 + 0 * z,
        ),
        axis=-1,
    )
    if a4 * c * c <= 1e-12 * np.max(np.abs(coeffs)):
        raise DegenerateCoefficientsError(
            f"leading coefficient a^4 c^2 = {a4 * c * c:.3e} underflows for b={b}, c={c}"
        )
    return coeffs


def _batch_roots(z: np.ndarray, b: float, c: float) -> np.ndarray:
    """Roots for many z at once via eigenvalues of stacked companion matrices."""
    coeffs = quartic_coefficients(z, b, c)
    monic = coeffs[:, 1:] / coeffs[:, :1]
    companion = np.zeros((len(z), 4, 4), dtype=complex)
    companion[:, 0, :] = -monic
    companion[:, 1, 0] = companion[:, 2, 1] = companion[:, 3, 2] = 1.0
    return np.linalg.eigvals(companion)


def polynomial_residual(coeffs: np.ndarray, root: complex) -> float:
    """|P(M)| relative to sum_k |c_k| |M|^k."""
    powers = root ** np.arange(len(coeffs) - 1, -1, -1)
    value = abs(np.dot(coeffs, powers))
    scale = float(np.sum(np.abs(coeffs) * np.abs(powers)))
    return value / scale if scale > 0 else value


def quartic_mgf_roots(z: complex, params: Ar1ModelParams) -> np.ndarray:
    """All four roots M of the quartic at z, polished and checked against 1e-8 relative residual."""
    if z == 0:
        raise DomainError("the quartic is only defined for z != 0")
    coeffs = quartic_coefficients(complex(z), params.b, params.c)
    derivative = np.polyder(coeffs)
    roots = np.roots(coeffs).astype(complex)
    for i, root in enumerate(roots):
        slope = np.polyval(derivative, root)
        if slope != 0:
            polished = root - np.polyval(coeffs, root) / slope
            if polynomial_residual(coeffs, polished) < polynomial_residual(coeffs, root):
                roots[i] = polished
        if polynomial_residual(coeffs, roots[i]) > 1e-8:
            raise NumericalError(f"quartic root {roots[i]} failed the residual check at z={z}")
    return roots


def bt_moment_generating(z: complex, b: float) -> complex:
    """
    Moment generating function of the AR(1) autocorrelation matrix B_T,
    M(z) = -1 / (sqrt(1 - z(1+b)/(1-b)) * sqrt(1 - z(1-b)/(1+b))).

    Used only to cross-check the quartic: r M = M_B(z / (r (1 + M))) with r = c.
    """
    if abs(b) >= 1:
        raise DomainError(f"|b| must be < 1, got {b}")
    first = 1.0 - complex(z) * (1.0 + b) / (1.0 - b)
    second = 1.0 - complex(z) * (1.0 - b) / (1.0 + b)
    if abs(first) < 1e-15 or abs(second) < 1e-15:
        raise BranchPointError(f"z={z} is a branch point for b={b}")
    return -1.0 / (np.sqrt(first) * np.sqrt(second))


def physical_root(z: complex, params: Ar1ModelParams) -> complex:
    """
    The quartic root on the physical branch at z (Im z > 0).

    The branch is followed along Im = Im z from far right of the support, where it
    behaves like 1/z + m2/z^2, and the matching polished root at z is returned.
    """
    z = complex(z)
    if z.imag <= 0:
        raise DomainError(f"the physical branch is tracked in the upper half plane, got z={z}")
    top = max(params.support_bound * 1.2, z.real, 1.0)
    far = np.geomspace(_CONTINUATION_REACH * top, top, _CONTINUATION_POINTS + 1)[:-1]
    near = np.linspace(top, z.real, 2000)
    path = np.concatenate([far, near]) + 1j * z.imag
    tracked = _track_physical_branch(path, _batch_roots(path, params.b, params.c), params.b, params.c)[-1]
    roots = quartic_mgf_roots(z, params)
    return complex(roots[int(np.argmin(np.abs(roots - tracked)))])


def _track_physical_branch(z_path: np.ndarray, roots: np.ndarray, b: float, c: float) -> np.ndarray:
    """
    Follow the physical root along a descending path of z.

    Candidates are roots whose density -Im G / pi is nonnegative; among them the root
    closest to the previous selection wins. The path starts far above the support where
    the physical root is close to 1/z + m2/z^2.
    """
    m2 = 1.0 + c * (1.0 + b * b) / (1.0 - b * b)
    previous = 1.0 / z_path[0] + m2 / z_path[0] ** 2
    greens = (roots + 1.0) / z_path[:, None]
    admissible = -greens.imag >= -1e-8 * (1.0 + np.abs(greens))
    selected = np.empty(len(z_path), dtype=complex)
    for i in range(len(z_path)):
        row = roots[i]
        mask = admissible[i] if admissible[i].any() else np.ones(4, dtype=bool)
        distance = np.where(mask, np.abs(row - previous), np.inf)
        previous = row[int(np.argmin(distance))]
        selected[i] = previous
    return selected


def _smoothed_density(grid: np.ndarray, b: float, c: float, epsilon: float) -> np.ndarray:
    """-Im G(lambda + i eps) / pi on the grid, unclipped."""
    top = max(grid[-1], 1.0)
    far = np.geomspace(_CONTINUATION_REACH * top, top, _CONTINUATION_POINTS + 1)[:-1]
    lam = np.concatenate([far, grid[::-1]])
    z = lam + 1j * epsilon
    roots = _batch_roots(z, b, c)
    chosen = _track_physical_branch(z, roots, b, c)[len(far):][::-1]
    greens = (chosen + 1.0) / (grid + 1j * epsilon)
    return -greens.imag / np.pi


def frv_ar1_curve(
    params: Ar1ModelParams, density_cfg: Optional[DensityConfig] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pointwise limiting density rho(lambda) on the lambda grid.

    With `extrapolate` on, the densities smoothed at eps and 2 eps are combined as
    2 rho(eps) - rho(2 eps), which cancels the first-order smoothing error.
    """
    density_cfg = density_cfg or DensityConfig(epsilon=params.epsilon)
    grid = params.grid(density_cfg.grid_points, density_cfg.headroom)
    rho = _smoothed_density(grid, params.b, params.c, params.epsilon)
    if density_cfg.extrapolate:
        rho = 2.0 * rho - _smoothed_density(grid, params.b, params.c, 2.0 * params.epsilon)
    return grid, np.clip(rho, 0.0, None)


def curve_support(grid: np.ndarray, rho: np.ndarray, tol: float) -> Tuple[float, float]:
    """Smallest grid interval holding every point above tol * max(rho)."""
    above = np.flatnonzero(rho > tol * rho.max()) if rho.max() > 0 else np.array([], dtype=int)
    if above.size == 0:
        return float(grid[0]), float(grid[-1])
    lo = grid[max(above[0] - 1, 0)]
    hi = grid[min(above[-1] + 1, len(grid) - 1)]
    return float(lo), float(hi)


def curve_cdf(grid: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return integrate.cumulative_trapezoid(rho, grid, initial=0.0)


def cdf_mass(grid: np.ndarray, cdf: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Model mass per bin; mass outside the edges is clamped into the end bins."""
    cum = np.interp(edges, grid, cdf)
    cum[0], cum[-1] = cdf[0], cdf[-1]
    mass = np.clip(np.diff(cum), 0.0, None)
    total = mass.sum()
    if total <= 0:
        raise NumericalError("model density has no mass on the requested bins")
    return mass / total


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    step = np.diff(grid)
    weights = np.zeros(len(grid))
    weights[:-1] += 0.5 * step
    weights[1:] += 0.5 * step
    return weights


def curve_bin_mass(
    grid: np.ndarray, rho: np.ndarray, edges: np.ndarray, binning: BinningKind = BinningKind.LINEAR
) -> np.ndarray:
    """Model mass per bin, binned the same way as an empirical spectrum."""
    if binning == BinningKind.HARD:
        return cdf_mass(grid, curve_cdf(grid, rho), edges)
    return linear_bin_mass(grid, edges, weights=rho * trapezoid_weights(grid))


def curve_to_density(grid: np.ndarray, rho: np.ndarray, edges: np.ndarray) -> SpectralDensity:
    """Integrate a pointwise density over each bin (cumulative trapezoid) and normalize."""
    edges = np.asarray(edges, dtype=float)
    return SpectralDensity(bin_edges=edges, mass=cdf_mass(grid, curve_cdf(grid, rho), edges))


def frv_ar1_density(
    params: Ar1ModelParams,
    edges: Optional[np.ndarray] = None,
    density_cfg: Optional[DensityConfig] = None,
) -> SpectralDensity:
    density_cfg = density_cfg or DensityConfig(epsilon=params.epsilon)
    grid, rho = frv_ar1_curve(params, density_cfg)
    if edges is None:
        lo, hi = curve_support(grid, rho, density_cfg.support_tol)
        bins = 100 if density_cfg.bins == "auto" else int(density_cfg.bins)
        edges = make_edges(lo, hi, bins)
    return curve_to_density(grid, rho, np.asarray(edges, dtype=float))


# ---------------------------------------------------------------------------
# Monte-Carlo residuals
# ---------------------------------------------------------------------------

def sample_ar1_residuals(n: int, t: int, b: float, seed: Optional[int] = None) -> np.ndarray:
    """Rows follow U_t = b U_{t-1} + e_t, e_t ~ N(0, 1 - b^2), U_0 ~ N(0, 1)."""
    if abs(b) >= 1:
        raise InvalidSpecError(f"|b| must be < 1, got {b}")
    rng = np.random.default_rng(seed)
    drive = np.empty((n, t))
    drive[:, 0] = rng.normal(0.0, 1.0, n)
    drive[:, 1:] = rng.normal(0.0, np.sqrt(1.0 - b * b), (n, t - 1))
    return signal.lfilter([1.0], [1.0, -b], drive, axis=1)


def sample_ar1_varying(rates: np.ndarray, seed: Optional[int] = None) -> np.ndarray:
    """
    Unit-variance rows with a time-varying rate:
    U_t = b_t U_{t-1} + sqrt(1 - b_t^2) e_t, e_t ~ N(0, 1), U_0 ~ N(0, 1).
    """
    rates = np.asarray(rates, dtype=float)
    if rates.ndim != 2:
        raise InvalidSpecError("rates must be a channels x samples matrix")
    if np.any(np.abs(rates) >= 1):
        raise InvalidSpecError("every rate must satisfy |b| < 1")
    rng = np.random.default_rng(seed)
    n, t = rates.shape
    drive = rng.normal(0.0, 1.0, (n, t))
    out = np.empty((n, t))
    out[:, 0] = drive[:, 0]
    for k in range(1, t):
        rate = rates[:, k]
        out[:, k] = rate * out[:, k - 1] + np.sqrt(1.0 - rate * rate) * drive[:, k]
    return out


# ---------------------------------------------------------------------------
# Histograms and the spectral distance
# ---------------------------------------------------------------------------

def make_edges(lo: float, hi: float, bins: int) -> np.ndarray:
    if bins < 1:
        raise InvalidSpecError(f"bins must be positive, got {bins}")
    if not hi > lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, bins + 1)


def anchored_edges(values: Sequence[float], lower: float, upper: float, bins: int) -> np.ndarray:
    """
    Edges of width (upper - lower) / bins on a lattice through `lower`, reaching past
    every value and `upper`, behind a leading bin [-width, ZERO_EDGE) for exact zeros.

    At most MAX_BIN_FACTOR * bins bins; values past the last edge belong to the end bin.
    """
    if bins < 1:
        raise InvalidSpecError(f"bins must be positive, got {bins}")
    width = (upper - lower) / bins
    if not width > 0:
        raise InvalidSpecError(f"reference support [{lower}, {upper}] is empty")
    values = np.asarray(values, dtype=float)
    top = max(float(values.max()), upper) if values.size else upper
    first = lower - np.floor((lower - ZERO_EDGE) / width - 1e-9) * width
    count = int(np.clip(np.ceil((top - first) / width - 1e-9), 1, MAX_BIN_FACTOR * bins - 2))
    return np.concatenate([[-width, ZERO_EDGE], first + width * np.arange(count + 1)])


def unit_mean_spectrum(eigs: Sequence[float]) -> np.ndarray:
    """Eigenvalues below ZERO_EDGE set to zero, the rest rescaled to mean one."""
    eigs = np.asarray(eigs, dtype=float)
    nonzero = eigs >= ZERO_EDGE
    out = np.where(nonzero, eigs, 0.0)
    if nonzero.any():
        out[nonzero] *= nonzero.sum() / out[nonzero].sum()
    return out


def linear_bin_mass(
    values: Sequence[float], edges: Sequence[float], weights: Optional[Sequence[float]] = None
) -> np.ndarray:
    """
    Unit-mass histogram that splits each value between the two nearest bin centres.

    Values below edges[1] stay whole in the first bin; the others are shared among the
    centres of bins 1..K-1 and clamped to the outermost ones.
    """
    values = np.asarray(values, dtype=float)
    edges = np.asarray(edges, dtype=float)
    weights = np.ones_like(values) if weights is None else np.asarray(weights, dtype=float)
    k = len(edges) - 1
    if k < 3:
        counts, _ = np.histogram(np.clip(values, edges[0], edges[-1]), bins=edges, weights=weights)
        mass = counts
    else:
        mass = np.zeros(k)
        first = values < edges[1]
        mass[0] = weights[first].sum()
        centers = 0.5 * (edges[1:-1] + edges[2:])
        x = np.clip(values[~first], centers[0], centers[-1])
        w = weights[~first]
        j = np.clip(np.searchsorted(centers, x, side="right") - 1, 0, len(centers) - 2)
        frac = (x - centers[j]) / (centers[j + 1] - centers[j])
        mass[1:] += np.bincount(j, w * (1.0 - frac), minlength=len(centers))
        mass[1:] += np.bincount(j + 1, w * frac, minlength=len(centers))
    total = float(mass.sum())
    if total <= 0:
        raise NumericalError("no mass falls on the requested bins")
    return mass / total


def spectrum_bin_mass(
    eigs: np.ndarray, edges: np.ndarray, binning: BinningKind = BinningKind.LINEAR
) -> np.ndarray:
    if binning == BinningKind.HARD:
        return histogram_mass(eigs, edges)
    return linear_bin_mass(eigs, edges)


def histogram_mass(eigs: np.ndarray, edges: np.ndarray) -> np.ndarray:
    counts, _ = np.histogram(np.clip(eigs, edges[0], edges[-1]), bins=edges)
    return counts / counts.sum()


def bin_eigenvalues(eigs: Sequence[float], edges: Sequence[float]) -> SpectralDensity:
    """Unit-mass histogram; values outside the edges are clamped into the end bins."""
    eigs = np.asarray(eigs, dtype=float)
    edges = np.asarray(edges, dtype=float)
    if eigs.size == 0:
        raise InvalidSpecError("cannot bin an empty eigenvalue list")
    return SpectralDensity(bin_edges=edges, mass=histogram_mass(eigs, edges))


def js_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Divergence between p (K,) and every row of q (B, K)."""
    p = np.asarray(p, dtype=float)[None, :]
    q = np.atleast_2d(np.asarray(q, dtype=float))
    mid = 0.5 * (p + q)
    value = 0.5 * special.rel_entr(p, mid).sum(axis=1) + 0.5 * special.rel_entr(q, mid).sum(axis=1)
    return np.clip(value, 0.0, LN2)


def js_masses(p: np.ndarray, q: np.ndarray) -> float:
    return float(js_rows(p, q)[0])


def js_divergence(p: SpectralDensity, q: SpectralDensity) -> float:
    """Jensen-Shannon divergence (natural log) between densities on identical bins."""
    if p.bin_edges.shape != q.bin_edges.shape or not np.allclose(
        p.bin_edges, q.bin_edges, rtol=1e-12, atol=1e-12
    ):
        raise BinMismatchError("densities must share identical bin edges")
    return js_masses(p.mass, q.mass)
