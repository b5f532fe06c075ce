#!/usr/bin/env python3
"""Pilot sweep that pins the schedule constants C_m and C_b.

Selection rule: the smallest (C_m, C_b) grid point whose realizable runs at
d = 5 satisfy the per-epoch contraction property theta(v_k, u) <= pi/2^(k+1)
for every epoch in at least 95% of seeded runs.  "Smallest" orders by label
cost first (C_m), then by draw cost (larger C_b means wider bands and fewer
draws, so C_b is ranked descending).

Run:
    python scripts/pilot_calibration.py [--seeds 100] [--d 5] [--epsilon 0.05]

The wide-band columns finish in seconds per cell; the narrow-band column
(C_b = 0.25) costs ~35x the draws and dominates the runtime.  Trim
--cb-grid for a quick look.
"""

from __future__ import annotations

import argparse
import math

import numpy as np

from stratperc.environment import EnvConfig, Hypothesis, realizable_noise
from stratperc.errors import DrawBudgetExceededError, InvalidConfigError
from stratperc.geometry import make_rng, sample_unit_sphere
from stratperc.learner import LabelOracle, make_schedule, outer_loop


def contraction_run(d: int, epsilon: float, delta: float, C_m: float, C_b: float, seed: int):
    u = sample_unit_sphere(d, make_rng(seed, 1))
    v0 = sample_unit_sphere(d, make_rng(seed, 2))
    if float(v0 @ u) < 0.0:
        v0 = -v0
    cfg = EnvConfig(d=d, u=Hypothesis(normal=u, threshold=0.0), c=2.0,
                    noise=realizable_noise(), seed=seed)
    schedule = make_schedule(d, epsilon, delta, C_m, C_b)
    oracle = LabelOracle()
    _, trace = outer_loop(cfg, oracle, v0, epsilon, delta, schedule, cfg.c, make_rng(seed, 0))
    ok = all(e.theta_after <= math.pi / 2.0 ** (e.k + 1) for e in trace.epochs)
    return ok, trace.total_draws, trace.total_labels


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--d", type=int, default=5)
    ap.add_argument("--epsilon", type=float, default=0.05)
    ap.add_argument("--delta", type=float, default=0.1)
    ap.add_argument("--cm-grid", type=float, nargs="+", default=[1.0, 2.0, 3.0, 4.0, 6.0])
    ap.add_argument("--cb-grid", type=float, nargs="+", default=[8.0, 4.0, 2.0, 1.0, 0.25])
    ap.add_argument("--target", type=float, default=0.95)
    args = ap.parse_args()

    print(f"d={args.d} epsilon={args.epsilon} delta={args.delta} seeds={args.seeds}")
    print(f"{'C_m':>5} {'C_b':>6} {'success':>8} {'med draws':>10} {'med labels':>10}")
    winners = []
    for C_m in args.cm_grid:
        for C_b in args.cb_grid:
            oks, draws, labels = [], [], []
            for seed in range(args.seeds):
                try:
                    ok, dr, la = contraction_run(args.d, args.epsilon, args.delta, C_m, C_b, seed)
                except (DrawBudgetExceededError, InvalidConfigError):
                    ok, dr, la = False, math.nan, math.nan
                oks.append(ok)
                draws.append(dr)
                labels.append(la)
            rate = float(np.mean(oks))
            md = float(np.nanmedian(draws))
            ml = float(np.nanmedian(labels))
            print(f"{C_m:>5g} {C_b:>6g} {rate:>8.2f} {md:>10.0f} {ml:>10.0f}")
            if rate >= args.target:
                winners.append((C_m, -C_b, md, ml))
    if not winners:
        print("no grid point met the target; widen the grid")
        return 1
    winners.sort()
    C_m, negC_b, md, ml = winners[0]
    print(f"\npinned: C_m = {C_m:g}, C_b = {-negC_b:g} "
          f"(median draws {md:.0f}, median labels {ml:.0f})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
