"""
app/api/services/window.py
Sliding data windows: formation, row standardization and eigendecomposition
"""

import logging
from typing import Tuple

import numpy as np
from scipy import linalg

from app.api.models.common import DataWindow, StandardizedWindow, TimeSeriesSet
from app.core.errors import DegenerateRowError, InvalidSpecError, WindowOutOfRangeError

logger = logging.getLogger(__name__)


def form_window(data: TimeSeriesSet, end_index: int, width: int) -> DataWindow:
    """Columns end_index-width+1 .. end_index; the last column is the current time."""
    if width < 2:
        raise InvalidSpecError(f"window width must be at least 2, got {width}")
    if end_index < width - 1 or end_index >= data.n_samples:
        raise WindowOutOfRangeError(
            f"end_index={end_index} out of range for width={width} and {data.n_samples} samples"
        )
    start = end_index - width + 1
    return DataWindow(
        matrix=data.values[:, start:end_index + 1],
        end_time=data.timestamps[end_index],
        end_index=end_index,
        channels=list(data.channels),
    )


def standardize_matrix(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise (r - mean) / std with the population (1/T) standard deviation."""
    matrix = np.asarray(matrix, dtype=float)
    means = matrix.mean(axis=1)
    stds = matrix.std(axis=1)
    scale = np.maximum(np.abs(means), 1.0)
    dead = np.flatnonzero(stds <= 1e-12 * scale)
    if dead.size:
        raise DegenerateRowError(dead.tolist())
    return (matrix - means[:, None]) / stds[:, None], means, stds


def standardize_rows(w: DataWindow) -> StandardizedWindow:
    matrix, means, stds = standardize_matrix(w.matrix)
    return StandardizedWindow(
        matrix=matrix,
        row_means=means,
        row_stds=stds,
        end_time=w.end_time,
        end_index=w.end_index,
        channels=list(w.channels),
    )


def covariance_matrix(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    sigma = matrix @ matrix.T / matrix.shape[1]
    return 0.5 * (sigma + sigma.T)


def covariance(w: StandardizedWindow) -> np.ndarray:
    """Sigma = (1/T) W W^T"""
    return covariance_matrix(w.matrix)


def eigen_decompose(sigma: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigenvalues in descending order with matching eigenvector columns.

    Ties keep the solver's original index order. Each eigenvector is signed so that
    its largest-magnitude entry is positive.
    """
    values, vectors = linalg.eigh(np.asarray(sigma, dtype=float))
    order = np.argsort(-values, kind="stable")
    values, vectors = values[order], vectors[:, order]
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return values, vectors * signs


def esd_eigenvalues(sigma: np.ndarray) -> np.ndarray:
    values = linalg.eigvalsh(np.asarray(sigma, dtype=float))
    order = np.argsort(-values, kind="stable")
    return values[order]
