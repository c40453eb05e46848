"""Analytic resonance eigenvalues of an ideal rectangular (brick) cavity.

With the speed of light normalized to one, the eigenvalues of the
curl-curl problem on a brick with perfectly conducting walls are

    lambda = pi^2 * ((m/a)^2 + (n/b)^2 + (p/c)^2)

over integer index triples (m, n, p) with at least two nonzero entries;
triples with all three indices nonzero carry multiplicity two, triples
with exactly one zero carry multiplicity one.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError


def brick_eigenvalues(dims, count: int) -> np.ndarray:
    """Return the ``count`` smallest analytic eigenvalues, with multiplicity.

    Parameters
    ----------
    dims : sequence of three positive floats
        Edge lengths (a, b, c) of the brick.
    count : int
        Number of eigenvalues to return.
    """
    a, b, c = (float(d) for d in dims)
    if min(a, b, c) <= 0:
        raise ConfigError("brick dimensions must be positive")
    if count < 1:
        raise ConfigError("count must be >= 1")

    # Index bound: the k-th eigenvalue cannot require single indices whose
    # lone contribution already exceeds the largest candidate built from a
    # generous cube of small indices.  Grow the cube until stable.
    limit = 3
    while True:
        values = []
        for m in range(limit + 1):
            for n in range(limit + 1):
                for p in range(limit + 1):
                    nonzero = (m > 0) + (n > 0) + (p > 0)
                    if nonzero < 2:
                        continue
                    lam = math.pi**2 * ((m / a) ** 2 + (n / b) ** 2 + (p / c) ** 2)
                    mult = 2 if nonzero == 3 else 1
                    values.extend([lam] * mult)
        values.sort()
        if len(values) >= count:
            cutoff = values[count - 1]
            # A larger box can only add eigenvalues above pi^2*(limit/max_dim)^2;
            # stop once that floor clears the current count-th value.
            floor = math.pi**2 * (limit / max(a, b, c)) ** 2
            if floor > cutoff:
                return np.array(values[:count])
        limit += 2


def first_eigenvalue(dims) -> float:
    """Smallest analytic brick-cavity eigenvalue for the given edge lengths."""
    return float(brick_eigenvalues(dims, 1)[0])
