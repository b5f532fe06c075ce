#!/usr/bin/env python3
"""Stress the learner against both noise adversaries across noise levels.

The guarantee regime caps nu at roughly epsilon / (ln d + ln ln(1/eps) +
ln(1/delta)); this sweep runs well past that cap to show where each adversary
actually breaks the learner.  The boundary-band adversary concentrates all of
its flips where the band queries land, so it degrades much earlier than
independent flips.

Run:
    python scripts/noise_stress.py [--seeds 20] [--d 5] [--epsilon 0.05]
"""

from __future__ import annotations

import argparse
import math

import numpy as np

from stratperc.config import nu_max
from stratperc.environment import (
    EnvConfig,
    Hypothesis,
    boundary_band_noise,
    random_flip_noise,
)
from stratperc.geometry import make_rng, sample_unit_sphere
from stratperc.learner import LabelOracle, make_schedule, outer_loop


def one_run(d, epsilon, delta, noise, seed):
    u = sample_unit_sphere(d, make_rng(seed, 1))
    v0 = sample_unit_sphere(d, make_rng(seed, 2))
    if float(v0 @ u) < 0.0:
        v0 = -v0
    cfg = EnvConfig(d=d, u=Hypothesis(normal=u, threshold=0.0), c=2.0, noise=noise, seed=seed)
    schedule = make_schedule(d, epsilon, delta)
    _, trace = outer_loop(cfg, LabelOracle(), v0, epsilon, delta, schedule, cfg.c,
                          make_rng(seed, 0))
    return trace.final_theta / math.pi


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--d", type=int, default=5)
    ap.add_argument("--epsilon", type=float, default=0.05)
    ap.add_argument("--delta", type=float, default=0.1)
    args = ap.parse_args()

    bound = nu_max(args.epsilon, args.d, args.delta)
    print(f"d={args.d} epsilon={args.epsilon} delta={args.delta} "
          f"regime bound nu_max={bound:.2e}")
    print(f"{'adversary':>18} {'nu':>10} {'nu/nu_max':>9} {'success':>8} {'med excess':>10}")
    for factor in (0.5, 1.0, 4.0, 16.0, 64.0):
        nu = factor * bound
        for name, noise in (
            ("random-flip", random_flip_noise(nu)),
            ("boundary-band-flip", boundary_band_noise(nu, args.d)),
        ):
            excesses = [one_run(args.d, args.epsilon, args.delta, noise, s)
                        for s in range(args.seeds)]
            success = float(np.mean([e <= args.epsilon for e in excesses]))
            print(f"{name:>18} {nu:>10.2e} {factor:>9g} {success:>8.2f} "
                  f"{float(np.median(excesses)):>10.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
