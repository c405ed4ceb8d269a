"""
Error stagnation on spatial Lotka-Volterra: fixed coarse mesh, shrinking dt.

Once the spatial error dominates, refining dt no longer reduces the RMSE. The
PNMOL variants keep a normalised chi^2 near one while the baseline becomes
overconfident. Also writes the per-step chi^2 curve of the finest runs.
"""

import os

import pandas as pd

from pnmol import SolverConfig, solve
from pnmol.bench import chi2_curve, sweep, write_metrics_csv
from pnmol.problems import lotka_volterra_spatial, reference_solve

WORKING_DIR = "./results"
DX = 0.2
DTS = [1e-2, 5e-3, 1e-3]
VARIANTS = ["latent", "white", "mol"]

if not os.path.exists(WORKING_DIR):
    os.mkdir(WORKING_DIR)


def main():
    rows = sweep("lotka-volterra", VARIANTS, [DX], DTS, max_parallel=os.cpu_count() or 1)
    write_metrics_csv(rows, os.path.join(WORKING_DIR, "lv_stagnation.csv"))

    for variant in VARIANTS:
        runs = [row for row in rows if row.variant == variant and row.error is None]
        rmses = [row.rmse_relative for row in runs]
        if len(rmses) == len(DTS):
            print(
                f"{variant:>6}: RMSE {', '.join(f'{r:.2e}' for r in rmses)} "
                f"(max/min {max(rmses) / min(rmses):.2f}), chi2 at dt={DTS[-1]}: {runs[-1].chi2_normalized:.2e}"
            )
        else:
            print(f"{variant:>6}: {len(DTS) - len(runs)} failed runs")

    problem = lotka_volterra_spatial()
    ref = reference_solve(problem, refinement=10, dx=DX)
    curves = []
    for variant in VARIANTS:
        post = solve(problem, SolverConfig(variant=variant, dx=DX, dt=DTS[-1]))
        times, values = chi2_curve(post, ref)
        curves.append(pd.DataFrame({"variant": variant, "t": times, "chi2": values}))
    out = os.path.join(WORKING_DIR, "lv_chi2_curve.csv")
    pd.concat(curves, ignore_index=True).to_csv(out, index=False, na_rep="nan")
    print(f"Wrote {out}")


if __name__ == "__main__":
    main()
