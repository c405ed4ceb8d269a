"""
Which error dominates: a 4 x 4 (dx, dt) grid on the SIR model.

The RMSE is only small when both dx and dt are small. Prints the RMSE table
of the latent variant and writes all metrics.
"""

import os

from pnmol.bench import metrics_frame, sweep, write_metrics_csv

WORKING_DIR = "./results"
DXS = [0.2, 0.1, 0.05, 0.025]
DTS = [0.1, 0.05, 0.02, 0.01]

if not os.path.exists(WORKING_DIR):
    os.mkdir(WORKING_DIR)


def main():
    rows = sweep("sir", ["latent"], DXS, DTS, max_parallel=os.cpu_count() or 1)
    write_metrics_csv(rows, os.path.join(WORKING_DIR, "sir_grid.csv"))
    table = metrics_frame(rows).pivot(index="dx", columns="dt", values="rmse_relative")
    print(table.to_string(float_format=lambda v: f"{v:.2e}"))


if __name__ == "__main__":
    main()
