#!/usr/bin/env python3
"""Export the California Housing dataset to the CSV schema this project reads.

Run on a machine with internet access (scikit-learn downloads the data on
first use), then copy the outputs into data/:

    python3 scripts/export_california_housing.py --out data/

Writes:
    california_housing.csv            all 20,640 rows
    california_housing_sample_200.csv the first 200 rows, for quick smoke runs
"""

import argparse
import os

from sklearn.datasets import fetch_california_housing

HEADER = [
    "MedInc", "HouseAge", "AveRooms", "AveBedrms", "Population",
    "AveOccup", "Latitude", "Longitude", "MedHouseVal",
]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data", help="output directory")
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)

    bunch = fetch_california_housing()
    assert list(bunch.feature_names) == HEADER[:-1], bunch.feature_names

    rows = []
    for x, y in zip(bunch.data, bunch.target):
        rows.append(",".join(repr(float(v)) for v in list(x) + [float(y)]))

    full = os.path.join(args.out, "california_housing.csv")
    with open(full, "w", encoding="utf-8") as f:
        f.write(",".join(HEADER) + "\n")
        f.write("\n".join(rows) + "\n")
    print(f"wrote {full} ({len(rows)} rows)")

    sample = os.path.join(args.out, "california_housing_sample_200.csv")
    with open(sample, "w", encoding="utf-8") as f:
        f.write(",".join(HEADER) + "\n")
        f.write("\n".join(rows[:200]) + "\n")
    print(f"wrote {sample} (200 rows)")


if __name__ == "__main__":
    main()
