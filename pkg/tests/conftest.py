"""Shared independent oracles for the test suite.

These deliberately avoid the library's fast paths: multiplication is direct
O(n^2) convolution, percentiles are sorted-list indexing, krum scores are
brute-force pairwise sums.
"""

import numpy as np
import pytest


def schoolbook_negacyclic(a, b, q):
    """Quadratic negacyclic product via direct convolution and X^n = -1."""
    a = np.asarray(a)
    b = np.asarray(b)
    n = len(a)
    if n * (q - 1) ** 2 < 2**62:
        conv = np.convolve(a.astype(np.int64), b.astype(np.int64))
    else:
        conv = np.convolve(a.astype(object), b.astype(object))
    out = conv[:n].copy()
    out[: n - 1] -= conv[n:]
    return (out % q).astype(np.int64)


def nearest_rank_percentile(values, p):
    """The ceil(p/100 * n)-th smallest value (1-indexed)."""
    ordered = sorted(values)
    import math

    return ordered[math.ceil(p / 100.0 * len(ordered)) - 1]


def krum_scores_bruteforce(vectors, f):
    """Sum of squared distances to the n-f-2 nearest neighbours, per vector."""
    n = len(vectors)
    scores = []
    for i in range(n):
        dists = sorted(
            float(np.sum((vectors[i] - vectors[j]) ** 2)) for j in range(n) if j != i
        )
        scores.append(sum(dists[: n - f - 2]))
    return scores


def finite_difference_gradient(fn, x, h=1e-6):
    """Central differences of a scalar function of a vector."""
    g = np.zeros_like(x, dtype=np.float64)
    for i in range(len(x)):
        up = x.copy()
        down = x.copy()
        up[i] += h
        down[i] -= h
        g[i] = (fn(up) - fn(down)) / (2 * h)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)
