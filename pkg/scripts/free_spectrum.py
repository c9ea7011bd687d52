"""Compare the lowest eigenvalues of the free periodic Laplacian with the DFT formula.

Usage: python3 scripts/free_spectrum.py [--L 16] [--spacing 0.25] [--k 5]
"""

import argparse

import numpy as np

from deloclab.eigensolver import lowest_eigenpairs
from deloclab.grid import ScalarField, TorusSpec, build_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--L", type=float, default=16.0)
    ap.add_argument("--spacing", type=float, default=0.25)
    ap.add_argument("--k", type=int, default=5)
    args = ap.parse_args()

    g = build_grid(TorusSpec(args.L, (), 1), args.spacing)
    lam = lowest_eigenpairs(g, ScalarField(g, np.zeros(g.counts)), args.k).eigenvalues
    N = g.counts[0]
    ref = np.sort(4 / args.spacing**2 * np.sin(np.pi * np.arange(N) / N) ** 2)[: args.k]
    for a, b in zip(lam, ref):
        print(f"{a:.15e}  {b:.15e}  {abs(a - b):.2e}")


if __name__ == "__main__":
    main()
