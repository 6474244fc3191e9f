"""Random streams.

Every stochastic routine takes an explicit :class:`numpy.random.Generator`.
Streams are derived hierarchically from one 64-bit root seed with
:class:`numpy.random.SeedSequence` spawn keys, so a given (seed, key) pair
always yields the same stream no matter in which order or on which thread
it is consumed.

Probabilities are rational, and biased draws are made by integer
thresholding: for ``p = k/m`` draw ``u`` uniform on ``{0..m-1}`` and test
``u < k``. Nothing is rounded through floating point.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

SEED_MAX = 2**64 - 1
_INT_FAST = 2**62


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for ``key`` below the root ``seed``."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def uniform_int(rng: np.random.Generator, n: int) -> int:
    """Uniform integer in ``[0, n)`` for arbitrarily large ``n``."""
    if n <= 0:
        raise ValueError("n must be positive")
    if n <= _INT_FAST:
        return int(rng.integers(n))
    nbits = (n - 1).bit_length()
    nbytes = (nbits + 7) // 8
    excess = 8 * nbytes - nbits
    while True:
        u = int.from_bytes(rng.bytes(nbytes), "little") >> excess
        if u < n:
            return u


def bernoulli(rng: np.random.Generator, p: Fraction, size=None):
    """Exact Bernoulli(p) draw(s) for a rational ``p``.

    Returns a Python bool when ``size`` is None, otherwise a boolean array.
    """
    p = Fraction(p)
    if not 0 <= p <= 1:
        raise ValueError(f"probability out of range: {p}")
    if size is None:
        return uniform_int(rng, p.denominator) < p.numerator
    if p.denominator > _INT_FAST:
        return np.array(
            [uniform_int(rng, p.denominator) < p.numerator for _ in range(int(np.prod(size)))]
        ).reshape(size)
    return rng.integers(p.denominator, size=size) < p.numerator


def to_fraction(value) -> Fraction:
    """Exact rational from an int, Fraction, ``"n/d"`` string or float.

    Floats are read through their shortest decimal repr, so ``0.01`` becomes
    ``1/100`` rather than the binary expansion of the double.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        return Fraction(repr(float(value)))
    return Fraction(value)
