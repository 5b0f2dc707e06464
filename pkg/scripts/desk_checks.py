#!/usr/bin/env python3
"""Informational desk-scale rehearsals for the statistical harness tasks.

Like scripts/gen_anchors.py this is self-contained (no package imports); it
exists so the curve-collapse tolerance and heat-map grid defaults are chosen
from measurements rather than guesswork. Nothing here is asserted by tests.
"""

from __future__ import annotations

import math
import time

import numpy as np

from gen_anchors import draw_data, draw_features, rng_for, run_dp, test_loss


def dp_run_for(n, d, p, seed, tau, c_clip, eps):
    delta = 1.0 / n
    x, y, u = draw_data(n, d, rng_for(seed, 0))
    v = draw_features(p, d, rng_for(seed, 1))
    phi = np.tanh(x @ v.T)
    lam_max = float(np.linalg.eigvalsh(phi @ phi.T)[-1])
    eta = 0.05 * n / lam_max
    steps = math.ceil(tau / eta)
    sigma = math.sqrt(eta * steps) * math.sqrt(8 * math.log(1 / delta)) / eps
    theta = run_dp(phi, y, eta, steps, c_clip, sigma, rng_for(seed, 2))
    return theta, v, u, eta * steps


def collapse_check(n=500, d=50, eps=4.0, m=4000, seeds=(100, 101, 102)):
    print("== collapse rehearsal: loss vs eta*T*p/d for p in {2000, 5000} ==")
    grid = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
    curves = {}
    for p in (2000, 5000):
        means = []
        for tt in grid:
            losses = []
            for seed in seeds:
                theta, v, u, eta_t = dp_run_for(n, d, p, seed, tt * d / p,
                                                0.5 * math.sqrt(p), eps)
                losses.append(test_loss(theta, v, u, m, rng_for(seed, 3)))
            means.append(float(np.mean(losses)))
        curves[p] = means
        print(f"  p={p}: " + "  ".join(f"{t:g}:{l:.3f}" for t, l in zip(grid, means)))
    disc = max(abs(a - b) for a, b in zip(curves[2000], curves[5000]))
    print(f"  max |curve(2000) - curve(5000)| on shared grid = {disc:.4f}")

    # negative control: plot the same losses against eta*T*d/p instead;
    # overlapping abscissa range is [lo, hi] in that coordinate
    alt = {p: [t * (d / p) ** 2 for t in grid] for p in (2000, 5000)}
    lo = max(min(alt[2000]), min(alt[5000]))
    hi = min(max(alt[2000]), max(alt[5000]))
    common = np.geomspace(lo, hi, 12)
    i2 = np.interp(np.log(common), np.log(alt[2000]), curves[2000])
    i5 = np.interp(np.log(common), np.log(alt[5000]), curves[5000])
    print(f"  negative-control max discrepancy = {np.max(np.abs(i2 - i5)):.4f}")


def grid_check(n=500, d=50, p=1000, eps=4.0, m=4000, seeds=(100, 101, 102)):
    print("== heat-map rehearsal: mean loss over (c_clip, T) grid ==")
    c_coefs = [0.02, 0.1, 0.5, 2.5, 12.5]
    t_grid = [1, 6, 36, 216, 1296]
    delta = 1.0 / n
    base = {}
    for seed in seeds:
        x, y, u = draw_data(n, d, rng_for(seed, 0))
        v = draw_features(p, d, rng_for(seed, 1))
        phi = np.tanh(x @ v.T)
        lam_max = float(np.linalg.eigvalsh(phi @ phi.T)[-1])
        base[seed] = (phi, y, v, u, 0.05 * n / lam_max)
    for cc in c_coefs:
        row = []
        for steps in t_grid:
            losses = []
            for seed in seeds:
                phi, y, v, u, eta = base[seed]
                sigma = math.sqrt(eta * steps) * math.sqrt(8 * math.log(1 / delta)) / eps
                theta = run_dp(phi, y, eta, steps, cc * math.sqrt(p), sigma,
                               rng_for(seed, 2))
                losses.append(test_loss(theta, v, u, m, rng_for(seed, 3)))
            row.append(float(np.mean(losses)))
        print(f"  c={cc:5.2f}*sqrt(p): " +
              "  ".join(f"T={t}:{l:.3g}" for t, l in zip(t_grid, row)))


if __name__ == "__main__":
    t0 = time.time()
    collapse_check()
    grid_check()
    print(f"[{time.time()-t0:.1f}s] done")
