#!/usr/bin/env python3
"""Cluster-count recovery experiment for the X-Means implementation.

Plants K well-separated spherical Gaussians, runs xmeans with the default
starting centroids, and reports recovered K and adjusted Rand index per
seed. Useful when tuning the BIC gate or the split/merge passes.
"""

import argparse
import itertools
import time

import numpy as np
from sklearn.metrics import adjusted_rand_score

from somonitor.clustering import ClusterConfig, xmeans


def planted(k, seed, n_per, d, separation):
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 1.0, (k, d))
    gap = min(np.linalg.norm(a - b) for a, b in itertools.combinations(centers, 2))
    centers *= (separation / gap) * 1.25
    points = np.vstack([rng.normal(0.0, 1.0, (n_per, d)) + c for c in centers])
    labels = np.repeat(np.arange(k), n_per)
    return points, labels


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--n-per", type=int, default=60)
    parser.add_argument("--d", type=int, default=8)
    parser.add_argument("--separation", type=float, default=6.0)
    parser.add_argument("--k0", type=int, default=3)
    parser.add_argument("--k-max", type=int, default=50)
    args = parser.parse_args()

    print(f"{'seed':>4}  {'planted':>7}  {'found':>5}  {'ARI':>6}  {'secs':>5}")
    recovered = 0
    for seed in range(args.seeds):
        k = (2, 3, 4, 5)[seed % 4]
        points, truth = planted(k, seed, args.n_per, args.d, args.separation)
        started = time.monotonic()
        partition = xmeans(points, ClusterConfig(k0=args.k0, k_max=args.k_max, seed=seed))
        elapsed = time.monotonic() - started
        predicted = [partition.assignments[i] for i in range(len(points))]
        ari = adjusted_rand_score(truth, predicted)
        ok = partition.K == k and ari >= 0.95
        recovered += ok
        print(f"{seed:>4}  {k:>7}  {partition.K:>5}  {ari:>6.3f}  {elapsed:>5.2f}")
    print(f"\nrecovered {recovered}/{args.seeds}")


if __name__ == "__main__":
    main()
