#!/usr/bin/env python3
"""Generate a synthetic satisfaction survey as categorical CSV.

Six binary service dimensions plus a binary overall rating, all driven by a
shared latent quality variable so the columns are mutually dependent, with
the overall rating leaning hardest on the latent signal.
"""

import argparse
import csv

import numpy as np

DIMENSIONS = ["departure", "booking", "checkin", "cabin", "crew", "meal"]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=9720)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--output", default="survey.csv")
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    latent = rng.random(args.rows)
    columns = {}
    for i, name in enumerate(DIMENSIONS):
        weight = 0.5 + 0.05 * i
        noise = rng.random(args.rows)
        columns[name] = (weight * latent + (1 - weight) * noise) > 0.5
    overall_noise = rng.random(args.rows)
    columns["overall"] = (0.75 * latent + 0.25 * overall_noise) > 0.45

    header = DIMENSIONS + ["overall"]
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in range(args.rows):
            writer.writerow(["high" if columns[name][r] else "low" for name in header])
    print(f"wrote {args.rows} rows x {len(header)} columns to {args.output}")


if __name__ == "__main__":
    main()
