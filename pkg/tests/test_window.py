"""Tests for window formation, standardization and eigendecomposition."""
import numpy as np
import pytest

from app.api.models.common import DataWindow, StandardizedWindow
from app.api.services.window import (
    covariance,
    covariance_matrix,
    eigen_decompose,
    esd_eigenvalues,
    form_window,
    standardize_matrix,
    standardize_rows,
)
from app.core.errors import AspectRatioError, DegenerateRowError, InvalidSpecError, WindowOutOfRangeError
from tests.conftest import make_set


def test_form_window_takes_trailing_columns(small_set):
    """Window ending at sample 9 of width 4 holds columns 6..9."""
    w = form_window(small_set, 9, 4)
    np.testing.assert_array_equal(w.matrix, small_set.values[:, 6:10])
    assert w.end_index == 9
    assert w.end_time == small_set.timestamps[9]
    assert w.channels == ["a", "b", "c"]


def test_form_window_first_possible_index(small_set):
    w = form_window(small_set, 3, 4)
    np.testing.assert_array_equal(w.matrix, small_set.values[:, 0:4])


def test_form_window_out_of_range(small_set):
    with pytest.raises(WindowOutOfRangeError):
        form_window(small_set, 2, 4)
    with pytest.raises(WindowOutOfRangeError):
        form_window(small_set, 10, 4)


def test_form_window_rejects_narrow_width(small_set):
    with pytest.raises(InvalidSpecError):
        form_window(small_set, 9, 1)


def test_form_window_rejects_wide_aspect(small_set):
    """3 channels cannot be analysed over 2 columns."""
    with pytest.raises(AspectRatioError):
        form_window(small_set, 9, 2)


def test_form_window_feeder_size(rng):
    """33 channels, width 200, window ending at sample 499 spans 300..499."""
    data = make_set(rng.normal(size=(33, 1000)))
    w = form_window(data, 499, 200)
    assert w.matrix.shape == (33, 200)
    np.testing.assert_array_equal(w.matrix[:, 0], data.values[:, 300])
    np.testing.assert_array_equal(w.matrix[:, -1], data.values[:, 499])
    assert w.aspect_ratio == pytest.approx(0.165)


def test_consecutive_windows_share_columns(rng):
    data = make_set(rng.normal(size=(4, 50)))
    first = form_window(data, 20, 10)
    second = form_window(data, 21, 10)
    np.testing.assert_array_equal(first.matrix[:, 1:], second.matrix[:, :-1])


def test_standardize_known_row():
    """[1, 2, 3] becomes [-sqrt(1.5), 0, sqrt(1.5)] with the population deviation."""
    w = DataWindow(matrix=[[1.0, 2.0, 3.0], [2.0, 4.0, 7.0]])
    s = standardize_rows(w)
    np.testing.assert_allclose(s.matrix[0], [-np.sqrt(1.5), 0.0, np.sqrt(1.5)], atol=1e-12)
    np.testing.assert_allclose(s.row_means, [2.0, 13.0 / 3.0])
    assert s.row_stds[0] == pytest.approx(np.sqrt(2.0 / 3.0))


def test_standardize_constant_row_raises():
    w = DataWindow(matrix=[[1.0, 2.0, 3.0, 4.0], [5.0, 5.0, 5.0, 5.0], [0.0, 1.0, 0.0, 1.0]])
    with pytest.raises(DegenerateRowError) as info:
        standardize_rows(w)
    assert info.value.rows == [1]


def test_standardize_properties_random_windows(rng):
    """Zero mean, unit population deviation, idempotence and a PSD covariance with trace N."""
    for _ in range(1000):
        n = int(rng.integers(2, 11))
        t = int(rng.integers(n, 41))
        scale = rng.uniform(0.01, 100.0, size=(n, 1))
        matrix = rng.normal(size=(n, t)) * scale + rng.normal(size=(n, 1)) * 10
        standardized, _, _ = standardize_matrix(matrix)

        np.testing.assert_allclose(standardized.mean(axis=1), 0.0, atol=1e-9)
        np.testing.assert_allclose(standardized.std(axis=1), 1.0, atol=1e-9)

        again, _, _ = standardize_matrix(standardized)
        np.testing.assert_allclose(again, standardized, atol=1e-9)

        sigma = covariance_matrix(standardized)
        np.testing.assert_array_equal(sigma, sigma.T)
        np.testing.assert_allclose(np.diag(sigma), 1.0, atol=1e-9)
        eigs = esd_eigenvalues(sigma)
        assert eigs.min() >= -1e-10
        assert eigs.sum() == pytest.approx(n, rel=1e-8)


def test_covariance_of_orthogonal_rows_is_identity():
    """Orthogonal rows with squared norm T give the identity."""
    matrix = np.array([[1.0, -1.0, 1.0, -1.0], [1.0, 1.0, -1.0, -1.0], [1.0, -1.0, -1.0, 1.0]])
    w = StandardizedWindow(matrix=matrix, row_means=np.zeros(3), row_stds=np.ones(3))
    np.testing.assert_allclose(covariance(w), np.eye(3), atol=1e-12)


def test_identical_rows_are_fully_correlated():
    w = standardize_rows(DataWindow(matrix=[[1.0, 3.0, 2.0, 5.0], [1.0, 3.0, 2.0, 5.0]]))
    sigma = covariance(w)
    assert sigma[0, 1] == pytest.approx(1.0)


def test_esd_eigenvalues_identity_and_diagonal():
    np.testing.assert_allclose(esd_eigenvalues(np.eye(3)), [1.0, 1.0, 1.0])
    np.testing.assert_allclose(esd_eigenvalues(np.diag([1.0, 3.0, 0.0])), [3.0, 1.0, 0.0], atol=1e-12)


def test_eigen_decompose_order_and_signs(rng):
    a = rng.normal(size=(6, 6))
    sigma = a @ a.T
    values, vectors = eigen_decompose(sigma)
    assert np.all(np.diff(values) <= 0)
    np.testing.assert_allclose(vectors @ np.diag(values) @ vectors.T, sigma, atol=1e-9)
    np.testing.assert_allclose(vectors.T @ vectors, np.eye(6), atol=1e-10)
    pivots = np.argmax(np.abs(vectors), axis=0)
    assert np.all(vectors[pivots, np.arange(6)] > 0)
