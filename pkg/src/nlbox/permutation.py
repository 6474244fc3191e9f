"""Uniform-output permutation systems D_d.

A family is given by an order ``d`` and, for every input pair, a permutation
``f_xy`` of ``S_d = {0..d-1}``. Its behaviour is ``a`` uniform on ``S_d`` and
``b = f_xy(a)``.

Inputs are tuples of small integers. A table-backed family has inputs of
length one (plain ints are accepted and wrapped); families produced by the
reduction step carry nested inputs such as ``(x, a0)`` and are evaluated by
rule, never materialized unless asked to.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .errors import InvalidPermutationError, ResourceCapError, ResourceConsumedError, ShapeError
from .model import ConditionalDistribution
from .rng import uniform_int

DEFAULT_TABLE_CAP = 10**7


def as_input(v) -> tuple[int, ...]:
    if isinstance(v, tuple):
        return v
    return (int(v),)


class PermutationFamily:
    """Base class. Subclasses implement :meth:`apply` and :meth:`apply_vec`."""

    d: int
    x_shape: tuple[int, ...]
    y_shape: tuple[int, ...]

    @property
    def x_size(self) -> int:
        return math.prod(self.x_shape)

    @property
    def y_size(self) -> int:
        return math.prod(self.y_shape)

    def apply(self, x, y, a: int) -> int:
        raise NotImplementedError

    def apply_vec(self, xs: Sequence[np.ndarray], ys: Sequence[np.ndarray], a: np.ndarray) -> np.ndarray:
        """Evaluate f_xy(a) elementwise; ``xs``/``ys`` hold one array per input coordinate."""
        raise NotImplementedError

    def perm(self, x, y) -> tuple[int, ...]:
        return tuple(self.apply(x, y, a) for a in range(self.d))

    def x_inputs(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(*(range(n) for n in self.x_shape))

    def y_inputs(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(*(range(n) for n in self.y_shape))

    def flat_x(self, x) -> int:
        return int(np.ravel_multi_index(as_input(x), self.x_shape))

    def flat_y(self, y) -> int:
        return int(np.ravel_multi_index(as_input(y), self.y_shape))

    def table(self, cap: int = DEFAULT_TABLE_CAP) -> np.ndarray:
        """Materialize ``f`` as an int array of shape (x_size, y_size, d), flat input order."""
        size = self.x_size * self.y_size * self.d
        if size > cap:
            raise ResourceCapError(
                f"family table has {size} entries, cap is {cap}", order=self.d, size=size, cap=cap
            )
        xi, yi, ai = np.meshgrid(
            np.arange(self.x_size), np.arange(self.y_size), np.arange(self.d), indexing="ij"
        )
        xs = np.unravel_index(xi.ravel(), self.x_shape)
        ys = np.unravel_index(yi.ravel(), self.y_shape)
        out = self.apply_vec(xs, ys, ai.ravel())
        return out.reshape(self.x_size, self.y_size, self.d)

    def is_bijective(self, x, y) -> bool:
        return sorted(self.perm(x, y)) == list(range(self.d))

    def instance(self, rng: np.random.Generator) -> BoxInstance:
        return BoxInstance(self, rng)


class TableFamily(PermutationFamily):
    """Family backed by an explicit ``(|X|, |Y|, d)`` permutation table."""

    def __init__(self, d: int, table):
        arr = np.asarray(table, dtype=np.int64)
        if arr.ndim != 3 or arr.shape[2] != d:
            raise ShapeError(f"expected a table of shape (|X|, |Y|, {d}), got {arr.shape}")
        if d < 1:
            raise ShapeError("order must be at least 1")
        ok = np.sort(arr, axis=2) == np.arange(d)
        bad = np.argwhere(~ok.all(axis=2))
        if len(bad):
            x, y = (int(v) for v in bad[0])
            raise InvalidPermutationError(x, y, arr[x, y].tolist())
        arr.setflags(write=False)
        self.d = int(d)
        self._table = arr
        self.x_shape = (arr.shape[0],)
        self.y_shape = (arr.shape[1],)

    def apply(self, x, y, a):
        (x,), (y,) = as_input(x), as_input(y)
        return int(self._table[x, y, a])

    def apply_vec(self, xs, ys, a):
        return self._table[xs[0], ys[0], a]

    def table(self, cap=DEFAULT_TABLE_CAP):
        return self._table

    def __eq__(self, other):
        return isinstance(other, TableFamily) and self.d == other.d and np.array_equal(self._table, other._table)

    def __hash__(self):
        return hash((self.d, self._table.tobytes(), self._table.shape))

    def __repr__(self):
        return f"TableFamily(d={self.d}, |X|={self.x_shape[0]}, |Y|={self.y_shape[0]})"


def from_table(d: int, table) -> TableFamily:
    """Family from nested ``table[x][y] = [f_xy(0), ..., f_xy(d-1)]``.

    Raises :class:`InvalidPermutationError` naming the first non-bijective row.
    """
    rows = [[list(r) for r in col] for col in table]
    for x, col in enumerate(rows):
        for y, r in enumerate(col):
            if len(r) != d:
                raise ShapeError(f"row (x={x}, y={y}) has length {len(r)}, expected {d}")
            if sorted(r) != list(range(d)):
                raise InvalidPermutationError(x, y, r)
    return TableFamily(d, rows)


def nlb() -> TableFamily:
    """The non-local box as an order-2 family: flip iff x = y = 1."""
    return from_table(2, [[[0, 1], [0, 1]], [[0, 1], [1, 0]]])


def to_distribution(F: PermutationFamily, cap: int = DEFAULT_TABLE_CAP) -> ConditionalDistribution:
    """P(ab|xy) = 1/d on the graph of f_xy, inputs flattened in row-major order."""
    size = F.x_size * F.y_size * F.d * F.d
    if size > cap:
        raise ResourceCapError(
            f"distribution would have {size} entries, cap is {cap}", order=F.d, size=size, cap=cap
        )
    t = F.table(cap)
    w = Fraction(1, F.d)
    zero = Fraction(0)
    probs = []
    for x in range(F.x_size):
        px = []
        for y in range(F.y_size):
            block = [[zero] * F.d for _ in range(F.d)]
            for a, b in enumerate(t[x, y]):
                block[a][int(b)] = w
            px.append(block)
        probs.append(px)
    return ConditionalDistribution(F.x_size, F.y_size, F.d, F.d, probs)


def sample_family(F: PermutationFamily, x, y, rng: np.random.Generator) -> tuple[int, int]:
    """One draw: ``a`` uniform on S_d and ``b = f_xy(a)``."""
    a = uniform_int(rng, F.d)
    return a, F.apply(x, y, a)


class BoxInstance:
    """A single use of a family.

    Each side may give its input once and receives its output at once. The
    side that queries first gets a uniform output; the other side's output
    is fixed by the permutation. A second query on either side raises
    :class:`ResourceConsumedError`.
    """

    def __init__(self, family: PermutationFamily, rng: np.random.Generator):
        self.family = family
        self._rng = rng
        self._alice = None  # (x, a)
        self._bob = None  # (y, b)

    @property
    def consumed(self) -> bool:
        return self._alice is not None and self._bob is not None

    def alice(self, x) -> int:
        if self._alice is not None:
            raise ResourceConsumedError("Alice's side of this box has already been used")
        if self._bob is None:
            a = uniform_int(self._rng, self.family.d)
        else:
            y, b = self._bob
            a = self.family.perm(x, y).index(b)
        self._alice = (x, a)
        return a

    def bob(self, y) -> int:
        if self._bob is not None:
            raise ResourceConsumedError("Bob's side of this box has already been used")
        if self._alice is None:
            b = uniform_int(self._rng, self.family.d)
        else:
            x, a = self._alice
            b = self.family.apply(x, y, a)
        self._bob = (y, b)
        return b

    def query(self, x, y) -> tuple[int, int]:
        a = self.alice(x)
        return a, self.bob(y)
