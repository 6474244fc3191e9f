"""Generators of families and non-signaling systems, for tests and demos."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .model import ConditionalDistribution
from .permutation import TableFamily, from_table


def random_family(rng: np.random.Generator, d: int, x_size: int, y_size: int) -> TableFamily:
    return TableFamily(d, np.array([[rng.permutation(d) for _ in range(y_size)] for _ in range(x_size)]))


def shift_family(d: int, x_size: int = 2, y_size: int = 2) -> TableFamily:
    """f_xy(a) = a + x*y mod d; for d = 2 this is the non-local box."""
    return from_table(d, [[[(a + x * y) % d for a in range(d)] for y in range(y_size)] for x in range(x_size)])


def random_nonsignaling(
    rng: np.random.Generator,
    max_alphabet: int = 3,
    max_denominator: int = 12,
    shape: tuple[int, int, int, int] | None = None,
) -> ConditionalDistribution:
    """Random rational non-signaling system whose entries are multiples of 1/q, q <= max_denominator.

    The system is a mixture of local deterministic strategies and order-k
    permutation boxes (k = 2, 3, ...) placed on random k-subsets of the
    output alphabets, with weights in units of 1/q.
    """
    if shape is None:
        shape = tuple(int(v) for v in rng.integers(1, max_alphabet + 1, size=4))
    X, Y, A, B = shape
    q = int(rng.integers(1, max_denominator + 1))
    table = [[[[Fraction(0)] * B for _ in range(A)] for _ in range(Y)] for _ in range(X)]
    units = q
    kmax = min(A, B)
    while units:
        k = int(rng.integers(1, kmax + 1))
        if k > units:
            k = 1
        m = int(rng.integers(1, units // k + 1))
        units -= k * m
        w = Fraction(m, q)
        if k == 1:
            alpha = rng.integers(A, size=X)
            beta = rng.integers(B, size=Y)
            for x in range(X):
                for y in range(Y):
                    table[x][y][alpha[x]][beta[y]] += w
            continue
        ia = rng.choice(A, size=k, replace=False)
        ib = rng.choice(B, size=k, replace=False)
        for x in range(X):
            for y in range(Y):
                f = rng.permutation(k)
                for i in range(k):
                    table[x][y][ia[i]][ib[f[i]]] += w
    return ConditionalDistribution(X, Y, A, B, table)
