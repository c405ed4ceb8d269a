"""
Global and localised collocation, stencil selection and boundary operators.
"""

import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pnmol.discretize import (
    ApproxKind,
    Grid,
    collocate,
    collocate_boundary,
    collocate_global,
    collocate_local,
    equispaced_grid,
    select_stencil,
)
from pnmol.exceptions import ConfigError, DimensionMismatchError, StencilRadiusError
from pnmol.kernels import DiffOperator, Kernel
from pnmol.utils import is_psd

LAP = DiffOperator.laplacian()


def test_equispaced_grid_flags_both_ends():
    grid = equispaced_grid(0.25)
    np.testing.assert_allclose(grid.points[:, 0], [0.0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_array_equal(grid.boundary_indices, [0, 4])
    np.testing.assert_array_equal(grid.interior_indices, [1, 2, 3])


def test_grid_rejects_duplicate_points():
    with pytest.raises(ConfigError):
        Grid(np.array([0.0, 0.5, 0.5]), np.array([True, False, True]))


@pytest.mark.parametrize("radius", [None, 1, 2])
def test_identity_operator_is_exact(radius):
    grid = equispaced_grid(0.2)
    approx = collocate(Kernel(), DiffOperator.identity(), grid, radius)
    np.testing.assert_array_equal(approx.D, np.eye(grid.size))
    np.testing.assert_array_equal(approx.E, np.zeros((grid.size, grid.size)))


def test_polynomial_kernel_recovers_quadratics_exactly():
    grid = equispaced_grid(0.25)
    approx = collocate_global(Kernel.polynomial(2), LAP, grid)
    x = grid.points[:, 0]
    np.testing.assert_allclose(approx.D @ (3.0 * x**2 - x + 2.0), 6.0, atol=1e-8)
    np.testing.assert_allclose(approx.E, 0.0, atol=1e-8)


def test_quadratic_stencils_give_central_difference_weights():
    h = 0.25
    grid = equispaced_grid(h)
    approx = collocate_local(Kernel.polynomial(2), LAP, grid, radius=1)
    np.testing.assert_allclose(approx.D[2, 1:4] * h**2, [1.0, -2.0, 1.0], rtol=1e-6)
    np.testing.assert_allclose(approx.E, 0.0, atol=1e-7)


def test_local_laplacian_weights_approach_central_differences():
    h = 0.01
    grid = equispaced_grid(h)
    approx = collocate_local(Kernel.squared_exponential(input_scale=1.0), LAP, grid, radius=1)
    n = grid.size // 2
    np.testing.assert_allclose(
        approx.D[n, n - 1 : n + 2] * h**2, [1.0, -2.0, 1.0], rtol=1e-3, atol=1e-3
    )
    assert approx.D[n].sum() == pytest.approx(0.0, abs=1e-4 / h**2)


def test_local_matrices_are_banded_with_diagonal_errors():
    grid = equispaced_grid(0.1)
    approx = collocate_local(Kernel.squared_exponential(3.0), LAP, grid, radius=2)
    assert approx.kind is ApproxKind.LOCALIZED
    rows, cols = np.nonzero(approx.D)
    assert np.max(np.abs(rows - cols)) <= 4
    assert np.count_nonzero(approx.D, axis=1).max() <= 5
    np.testing.assert_array_equal(approx.E, np.diag(np.diag(approx.E)))
    assert np.all(np.diag(approx.E) >= 0.0)


def test_full_radius_stencils_reproduce_global_collocation():
    grid = equispaced_grid(0.25)
    k = Kernel.squared_exponential(1.0)
    glob = collocate_global(k, LAP, grid)
    loc = collocate_local(k, LAP, grid, radius=2)
    np.testing.assert_allclose(loc.D, glob.D, rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(np.diag(loc.E), np.diag(glob.E), rtol=1e-5, atol=1e-8)


def test_global_error_covariance_is_psd():
    grid = equispaced_grid(0.2)
    approx = collocate_global(Kernel.squared_exponential(1.0), LAP, grid)
    assert is_psd(approx.E, tol=1e-6)


def test_threaded_assembly_matches_serial():
    grid = equispaced_grid(0.05)
    k = Kernel.squared_exponential(4.0)
    serial = collocate_local(k, LAP, grid, radius=2)
    threaded = collocate_local(k, LAP, grid, radius=2, max_workers=4)
    np.testing.assert_array_equal(serial.D, threaded.D)
    np.testing.assert_array_equal(serial.E, threaded.E)


def test_stencils_are_nearest_points_with_index_tie_break():
    grid = equispaced_grid(0.25)
    assert select_stencil(grid, 2, 1).neighbor_indices == (1, 2, 3)
    assert select_stencil(grid, 0, 1).neighbor_indices == (0, 1, 2)
    assert select_stencil(grid, 4, 2).neighbor_indices == (0, 1, 2, 3, 4)


def test_stencils_in_two_dimensions_use_the_tree():
    xs, ys = np.meshgrid(np.linspace(0, 1, 4), np.linspace(0, 1, 4), indexing="ij")
    points = np.stack([xs.ravel(), ys.ravel()], axis=-1)
    mask = (points == 0).any(axis=1) | (points == 1).any(axis=1)
    grid = Grid(points, mask)
    stencil = select_stencil(grid, 5, 2)
    assert len(stencil.neighbor_indices) == 5
    assert 5 in stencil.neighbor_indices
    # the four axis neighbours of (1/3, 1/3)
    assert set(stencil.neighbor_indices) == {1, 4, 5, 6, 9}


def test_stencil_radius_larger_than_grid_is_rejected():
    grid = equispaced_grid(0.25)
    with pytest.raises(StencilRadiusError):
        select_stencil(grid, 0, 3)
    with pytest.raises(StencilRadiusError):
        collocate_local(Kernel(), LAP, grid, radius=3)


def test_kernel_and_grid_dimension_must_agree():
    with pytest.raises(DimensionMismatchError):
        collocate_global(Kernel.squared_exponential(1.0, dimension=2), LAP, equispaced_grid(0.25))


def test_neumann_boundary_operator_rows():
    grid = equispaced_grid(0.05)
    approx = collocate_boundary(
        Kernel.squared_exponential(1.0), DiffOperator.directional((1.0,)), grid, radius=1
    )
    x = grid.points[:, 0]
    B, R = approx.restrict(grid.boundary_indices)
    # d/dx of x^2 at 0 and 1, from one-sided stencils
    np.testing.assert_allclose(B @ x**2, [0.0, 2.0], atol=2e-2)
    assert R.shape == (2, 2)
    assert np.all(np.diag(R) >= 0.0)


def test_laplacian_boundary_operator_is_rejected():
    with pytest.raises(ConfigError):
        collocate_boundary(Kernel(), LAP, equispaced_grid(0.25))


def test_to_frame_lists_nonzero_entries():
    grid = equispaced_grid(0.25)
    frame = collocate_local(Kernel.squared_exponential(1.0), LAP, grid, radius=1).to_frame()
    assert set(frame["matrix"]) == {"D", "E"}
    assert len(frame[frame["matrix"] == "D"]) == 3 * grid.size


def test_local_errors_are_largest_next_to_the_boundary():
    grid = equispaced_grid(1.0 / 24)
    approx = collocate_local(Kernel.squared_exponential(3.0), LAP, grid, radius=1)
    e = np.diag(approx.E)
    n = grid.size
    assert set(np.argsort(e)[-2:]) <= {0, 1, n - 2, n - 1}
    assert e[[0, n - 1]].min() > e[2 : n - 2].max()


def laplacian_rmse(kernel, radius, n=25):
    """RMSE of D u against the exact Laplacian of u(x) = sin(x^2)."""
    grid = equispaced_grid(1.0 / (n - 1))
    x = grid.points[:, 0]
    D = collocate(kernel, LAP, grid, radius).D
    exact = 2.0 * np.cos(x**2) - 4.0 * x**2 * np.sin(x**2)
    return float(np.sqrt(np.mean((D @ np.sin(x**2) - exact) ** 2)))


def test_wider_stencils_reduce_the_laplacian_error():
    kernel = Kernel.squared_exponential(3.0)
    assert laplacian_rmse(kernel, 2) < laplacian_rmse(kernel, 1)
