#!/usr/bin/env python3
"""
Debug script that finds the well depth c at which the square well with q = -c
first has a non-real eigenvalue pair at t = 0
"""

import json
import logging
import sys

from classify import nonreal_eigenvalues
from coefficients import load_coefficients, with_potential_shift

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')

SEARCH_RADIUS = 8.0


def count_nonreal(base, c):
    shifted = with_potential_shift(base, -c)
    return len(nonreal_eigenvalues(shifted, 0.0, SEARCH_RADIUS))


def bisect_threshold(base, lo=-1.0, hi=1.0, steps=40):
    """Smallest c (to bisection accuracy) with a non-real pair in the search box"""
    if count_nonreal(base, lo) > 0 or count_nonreal(base, hi) == 0:
        raise ValueError(f"no sign change of the non-real count on [{lo}, {hi}]")
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if count_nonreal(base, mid) > 0:
            hi = mid
        else:
            lo = mid
        logging.debug(f"bracket [{lo}, {hi}]")
    return hi


def debug_nonreal_search(path='coefficient_sets/square_well.json', margin=0.5):
    """Report the collision threshold and the non-real pair a little beyond it"""
    print("🔍 Searching for the onset of non-real eigenvalues")
    print("=" * 50)

    base = load_coefficients(path)
    threshold = bisect_threshold(base)
    print(f"Collision threshold c* = {threshold!r}")

    c = threshold + margin
    pair = nonreal_eigenvalues(with_potential_shift(base, -c), 0.0, SEARCH_RADIUS)
    print(f"At c = {c!r}:")
    for lam in pair:
        print(f"   lambda = {lam.real!r} {lam.imag:+.17g}i")

    print(json.dumps({'threshold': threshold, 'c': c,
                      'nonreal': [[lam.real, lam.imag] for lam in pair]}, indent=2))


if __name__ == "__main__":
    debug_nonreal_search(*sys.argv[1:2])
