#!/usr/bin/env python3
"""Timing experiment: bootstrap staging consensus at a fixed ordering.

Runs the same M-replicate consensus serially and with a worker pool and
prints wall times, so machine-specific throughput can be checked before
launching larger sweeps.
"""

import argparse
import time

import numpy as np

from stagedtree import Dataset, LearnConfig, ResamplePlan, Schema, Variable, run_bootstrap_consensus


def survey_data(rng, n, p):
    latent = rng.random(n)
    cols = []
    for _ in range(p):
        noise = rng.random(n)
        cols.append(((0.6 * latent + 0.4 * noise) > 0.5).astype(np.int64))
    schema = Schema(tuple(Variable(f"Q{j+1}", ("high", "low")) for j in range(p)))
    return Dataset(schema, np.column_stack(cols))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=10_000)
    parser.add_argument("--variables", type=int, default=7)
    parser.add_argument("--replicates", type=int, default=200)
    parser.add_argument("--threads", type=int, default=4)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    d = survey_data(rng, args.rows, args.variables)
    order = tuple(range(args.variables))
    plan = ResamplePlan(args.replicates, args.seed)
    cfg = LearnConfig()

    started = time.perf_counter()
    serial = run_bootstrap_consensus(d, order, plan, cfg, threads=1)
    serial_s = time.perf_counter() - started
    print(f"serial:   M={args.replicates} in {serial_s:.2f}s")

    started = time.perf_counter()
    pooled = run_bootstrap_consensus(d, order, plan, cfg, threads=args.threads)
    pooled_s = time.perf_counter() - started
    print(f"{args.threads} workers: M={args.replicates} in {pooled_s:.2f}s")

    same = all(
        np.array_equal(a.stage_of, b.stage_of)
        for a, b in zip(serial.stagings, pooled.stagings)
    )
    print(f"outputs identical: {same}")


if __name__ == "__main__":
    main()
