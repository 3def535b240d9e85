#!/usr/bin/env python3
"""Carve a turn/straight pattern that tracks a circular reference.

The vehicle has four constant-control modes (two forward speeds, left or
right steering).  Starting from "always fast-right", fifty descent steps
reshape the schedule until the vehicle hugs the reference circle.  Each
iteration projects the schedule through the max rule at a step size
gamma picked by the backtracking search.
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from modesched.models.vehicle import (HORIZON_DEFAULT, vehicle_initial_state,
                                      vehicle_system)
from modesched.scheduler import OptimizerConfig, optimize
from modesched.signals import constant_schedule


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iterations", type=int, default=50)
    ap.add_argument("--out", type=Path, default=Path("demo_out/vehicle"))
    args = ap.parse_args()

    sys_ = vehicle_system()
    x0 = vehicle_initial_state()
    u0 = constant_schedule(2, HORIZON_DEFAULT, 4)
    cfg = OptimizerConfig(alpha=0.4, beta=0.4, max_iter=args.iterations,
                          theta_stop=0.0)

    print(f"tracking a circle for {u0.horizon:.4f} s, "
          f"{args.iterations} iterations, alpha={cfg.alpha} beta={cfg.beta}")
    res = optimize(sys_, x0, u0, cfg)

    print(f"{'k':>3} {'J':>12} {'theta':>12} {'gamma':>10} "
          f"{'j':>2} {'segments':>8}")
    for r in res.iterations:
        gamma = f"{r.gamma:10.4g}" if r.gamma is not None else " " * 10
        j = f"{r.j:2d}" if r.j is not None else "  "
        print(f"{r.k:3d} {r.cost:12.6f} {r.theta:12.4f} {gamma} "
              f"{j} {r.n_segments:8d}")
    print(f"status: {res.status}; cost {res.costs[0]:.2f} -> {res.cost:.4f} "
          f"({res.schedule.n_segments} segments)")

    args.out.mkdir(parents=True, exist_ok=True)
    res.schedule.save_json(args.out / "schedule.json")
    ts = np.linspace(0.0, u0.horizon, 1401)
    xs = res.trajectory(ts)
    with open(args.out / "trajectory.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "heading", "clock"])
        for t, row in zip(ts, xs):
            w.writerow([f"{t:.6f}"] + [f"{v:.9f}" for v in row])
    print(f"wrote {args.out}/schedule.json and trajectory.csv")


if __name__ == "__main__":
    main()
