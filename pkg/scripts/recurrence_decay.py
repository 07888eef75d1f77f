"""Decay of mu(E_k) for the doubling map, compared with 1 - exp(-2 (log k)^5 / k).

For k below about 5e5 the horizon (log k)^5 exceeds k and E_k is essentially
everything, so the scan starts at 10^6.
"""
import argparse
import math

import numpy as np

from closest_return import maps as M
from closest_return import mixing as X


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    d = M.doubling()
    points = []
    for k in np.logspace(6, 7.5, 4).astype(int):
        est = X.measure_E_k(d, int(k), args.samples, args.seed, args.workers)
        J = X.e_k_horizon(k)
        print(f"k={k:<9d} J={J:<8d} mu(E_k)={est.measure_hat:.4f} +- {est.half_width:.4f}  "
              f"heuristic {1 - math.exp(-2 * J / k):.4f}")
        points.append((k, est.measure_hat))
    fit = X.fit_decay(points)
    print(f"fit: {fit.kind}, rate {fit.rate:.3f}")


if __name__ == "__main__":
    main()
