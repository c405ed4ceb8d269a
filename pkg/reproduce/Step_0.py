"""
Calibration gap on the heat equation: coarse mesh, fine time step.

Writes the error/uncertainty ratio per (t, x) of every variant and prints the
median ratios. The baseline ignores the spatial error, so its ratio is
expected to be orders of magnitude larger than that of the PNMOL variants.
"""

import os

import numpy as np
import pandas as pd

from pnmol import SolverConfig, solve
from pnmol.bench import error_uncertainty_ratio, median_ratio
from pnmol.problems import heat_1d, reference_solve

WORKING_DIR = "./results"
DX = 0.2
DT = 1e-3

if not os.path.exists(WORKING_DIR):
    os.mkdir(WORKING_DIR)


def main():
    problem = heat_1d()
    ref = reference_solve(problem, refinement=10, dx=DX)

    frames, medians = [], {}
    for variant in ("latent", "white", "mol"):
        post = solve(problem, SolverConfig(variant=variant, dx=DX, dt=DT))
        ratio = error_uncertainty_ratio(post, ref)[:, 0, :]
        t, x = np.meshgrid(post.times, post.grid.points[:, 0], indexing="ij")
        frames.append(
            pd.DataFrame({"variant": variant, "t": t.ravel(), "x": x.ravel(), "ratio": ratio.ravel()})
        )
        medians[variant] = median_ratio(post, ref)
        print(f"{variant:>6}: median error/uncertainty ratio {medians[variant]:.3e}")

    out = os.path.join(WORKING_DIR, "heat_ratio.csv")
    pd.concat(frames, ignore_index=True).to_csv(out, index=False, na_rep="nan")
    print(f"Wrote {out}")

    best = min(medians["latent"], medians["white"])
    print(f"baseline / PNMOL median ratio: {medians['mol'] / best:.1e} (expected >= 1e2)")
    print(f"PNMOL median ratio within [1e-2, 1e2]: {1e-2 <= best <= 1e2}")


if __name__ == "__main__":
    main()
