"""
Stencil size study: RMSE of D u against the exact Laplacian for u(x) = sin(x^2)
on a 25-point mesh, over stencil radius and input scale of the SE kernel.

Small radii are limited by the stencil's polynomial order, large radii with
small input scales by ill-conditioned Gram matrices. Also writes the diagonal
of E for radius 1, which peaks at the boundary.
"""

import os

import numpy as np
import pandas as pd

from pnmol.discretize import collocate, equispaced_grid
from pnmol.exceptions import PnmolError
from pnmol.kernels import DiffOperator, Kernel

WORKING_DIR = "./results"
NUM_POINTS = 25
RADII = [1, 2, 3, 4, 6, None]
INPUT_SCALES = [0.25, 1.0, 2.0, 4.0, 8.0, 16.0]

if not os.path.exists(WORKING_DIR):
    os.mkdir(WORKING_DIR)


def main():
    grid = equispaced_grid(1.0 / (NUM_POINTS - 1))
    x = grid.points[:, 0]
    u = np.sin(x**2)
    exact = 2.0 * np.cos(x**2) - 4.0 * x**2 * np.sin(x**2)
    laplacian = DiffOperator.laplacian()

    rows = []
    for input_scale in INPUT_SCALES:
        kernel = Kernel.squared_exponential(input_scale)
        for radius in RADII:
            label = "global" if radius is None else radius
            try:
                approx = collocate(kernel, laplacian, grid, radius)
            except PnmolError as e:
                print(f"r={input_scale:<5} radius={label}: {type(e).__name__}")
                rows.append({"input_scale": input_scale, "radius": label, "rmse": np.nan})
                continue
            rmse = float(np.sqrt(np.mean((approx.D @ u - exact) ** 2)))
            rows.append({"input_scale": input_scale, "radius": label, "rmse": rmse})
            print(f"r={input_scale:<5} radius={label}: rmse {rmse:.3e}")

    out = os.path.join(WORKING_DIR, "stencil_study.csv")
    pd.DataFrame(rows).to_csv(out, index=False, na_rep="nan")
    print(f"Wrote {out}")

    approx = collocate(Kernel.squared_exponential(4.0), laplacian, grid, 1)
    out = os.path.join(WORKING_DIR, "stencil_error_variance.csv")
    pd.DataFrame({"x": x, "e": np.diag(approx.E)}).to_csv(out, index=False)
    print(f"Wrote {out}")


if __name__ == "__main__":
    main()
