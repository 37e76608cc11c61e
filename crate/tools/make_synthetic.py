#!/usr/bin/env python3
"""Regenerates the synthetic training sets under fixtures/.

gauss2.dat      200 samples, 2 features, 2 classes: N((-2,-2), I) vs N((2,2), I)
patterns8.dat   200 samples, 8x8 images, 2 classes: a horizontal or a vertical
                bar of ones at a random row/column, plus N(0, 0.1) noise
"""

import argparse
from pathlib import Path

import numpy as np


def write_ascii(path, x, y, classes):
    with open(path, "w") as f:
        f.write(f"{x.shape[0]} {x.shape[1]} {classes}\n")
        for row, label in zip(x, y):
            f.write(" ".join(f"{v:.6f}" for v in row) + f" {label}\n")


def gauss2(rng, n=200):
    y = np.arange(n) % 2
    centers = np.where(y[:, None] == 0, -2.0, 2.0)
    return centers + rng.standard_normal((n, 2)), y


def patterns8(rng, n=200):
    y = np.arange(n) % 2
    x = np.zeros((n, 8, 8))
    for i, label in enumerate(y):
        k = rng.integers(8)
        if label == 0:
            x[i, k, :] = 1.0
        else:
            x[i, :, k] = 1.0
    x += 0.1 * rng.standard_normal(x.shape)
    return x.reshape(n, 64), y


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "fixtures")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    write_ascii(args.out / "gauss2.dat", *gauss2(rng), 2)
    write_ascii(args.out / "patterns8.dat", *patterns8(rng), 2)


if __name__ == "__main__":
    main()
