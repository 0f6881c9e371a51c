"""Regenerate samples/sample.csv and samples/alternative.csv from the BinaryATE simulator."""

import csv
from pathlib import Path

import numpy as np

from riesz_dml.sim import BinaryATE, draw_sample

HERE = Path(__file__).parent


def write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.10g}" for v in r])


if __name__ == "__main__":
    dgp = BinaryATE(p=3, coefficients=(0.4, 0.3, -0.3))
    data = draw_sample(dgp, 300, seed=2024)
    write(HERE / "sample.csv", list(data.columns) + ["y"], np.column_stack([data.W, data.Y]))
    alt = np.random.default_rng(7).standard_normal((100, 3)) + 0.25
    write(HERE / "alternative.csv", ["x1", "x2", "x3"], alt)
