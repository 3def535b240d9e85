#!/usr/bin/env python3
"""Watch the projected schedule change as the step size grows.

A two-mode toy: mode 1 is active everywhere and mode 2's insertion
gradient is a parabola dipping to -2 at t = 0.75.  Below the critical
step gamma0 = 1/2 the projection returns the schedule untouched; past
it, a mode-2 window opens around the minimizer and widens like
sqrt(gamma - gamma0).  The same sweep on a V-shaped channel (a crossing
rather than a tangency) widens linearly instead — the two growth laws
behind the optimizer's type-aware backtracking.
"""
import numpy as np

from modesched.gradient import InsertionGradientField
from modesched.projection import gamma_zero, max_map
from modesched.signals import constant_schedule


def sweep(name, channel, u):
    zero = lambda ts: np.zeros_like(np.asarray(ts, float))
    field = InsertionGradientField.from_callables(u, [zero, channel])
    g0 = gamma_zero(-2.0)
    print(f"\n{name}: theta = -2 at t = 0.75, gamma0 = {g0}")
    print(f"{'gamma':>12} {'window':>24} {'width':>12}")
    for eps in (-1e-3, 1e-4, 1e-3, 1e-2, 1e-1):
        gamma = g0 * (1.0 + eps)
        u1 = max_map(u, field, gamma)
        if u1.n_segments == 1:
            print(f"{gamma:12.6f} {'(unchanged)':>24}")
            continue
        lo, hi = u1.times
        print(f"{gamma:12.6f} [{lo:10.6f}, {hi:10.6f}] {hi - lo:12.2e}")


def main():
    u = constant_schedule(1, 2.0, 2)
    sweep("tangency (parabola, curvature 2)",
          lambda ts: (np.asarray(ts, float) - 0.75) ** 2 - 2.0, u)
    sweep("crossing (V, slope 5)",
          lambda ts: 5.0 * np.abs(np.asarray(ts, float) - 0.75) - 2.0, u)
    print("\nnear gamma0: tangency width ~ 4*sqrt(gamma - gamma0), "
          "crossing width ~ (8/5)*(gamma - gamma0) -- compare above")


if __name__ == "__main__":
    main()
