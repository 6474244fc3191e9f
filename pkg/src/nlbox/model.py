"""Exact-rational bipartite systems P(ab|xy).

A :class:`ConditionalDistribution` is an immutable four-index table of
:class:`fractions.Fraction` entries indexed ``[x][y][a][b]``. All alphabets
are dense integer ranges ``0..size-1``.
"""

from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterator

import numpy as np

from . import _exact
from .errors import RationalizeError, ShapeError, SignalingError
from .rng import uniform_int

Rational = Fraction
Index = tuple[int, int, int, int]


def _as_rational(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (bool, float, np.floating)):
        raise TypeError(
            f"probabilities must be exact (int, Fraction or 'n/d' string), got {value!r}; "
            "use rationalize() for floating tables"
        )
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot interpret {value!r} as a rational probability")


@dataclass(frozen=True)
class ConditionalDistribution:
    """Table of P(ab|xy) with exact rational entries.

    Construction checks the shape only. Normalization, nonnegativity and the
    non-signaling conditions are checked by :func:`validate`, so that broken
    tables can still be represented and reported on.
    """

    x_size: int
    y_size: int
    a_size: int
    b_size: int
    probs: tuple = field(repr=False)

    def __post_init__(self):
        sizes = (self.x_size, self.y_size, self.a_size, self.b_size)
        if any(not isinstance(s, (int, np.integer)) or s < 1 for s in sizes):
            raise ShapeError(f"alphabet sizes must be positive integers, got {sizes}")
        object.__setattr__(self, "probs", _freeze(self.probs, sizes, ()))

    @classmethod
    def from_table(cls, table) -> ConditionalDistribution:
        """Build from a nested ``[x][y][a][b]`` sequence, inferring the sizes."""
        try:
            xs = len(table)
            ys = len(table[0])
            as_ = len(table[0][0])
            bs = len(table[0][0][0])
        except (TypeError, IndexError) as exc:
            raise ShapeError("table must be a non-empty 4-level nested sequence") from exc
        return cls(xs, ys, as_, bs, table)

    @classmethod
    def from_function(cls, sizes, fn: Callable[[int, int, int, int], object]) -> ConditionalDistribution:
        xs, ys, as_, bs = sizes
        table = [
            [[[fn(x, y, a, b) for b in range(bs)] for a in range(as_)] for y in range(ys)]
            for x in range(xs)
        ]
        return cls(xs, ys, as_, bs, table)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.x_size, self.y_size, self.a_size, self.b_size)

    def __getitem__(self, key: Index) -> Fraction:
        x, y, a, b = key
        return self.probs[x][y][a][b]

    def row(self, x: int, y: int) -> tuple[tuple[Fraction, ...], ...]:
        """The ``a_size x b_size`` block P(.,.|x,y)."""
        return self.probs[x][y]

    def inputs(self) -> Iterator[tuple[int, int]]:
        return itertools.product(range(self.x_size), range(self.y_size))

    def entries(self) -> Iterator[tuple[Index, Fraction]]:
        for x, y in self.inputs():
            for a, b in itertools.product(range(self.a_size), range(self.b_size)):
                yield (x, y, a, b), self.probs[x][y][a][b]

    def to_array(self) -> np.ndarray:
        """Float copy of the table, for display and plotting only."""
        return np.array(
            [[[[float(p) for p in rb] for rb in ra] for ra in ry] for ry in self.probs], dtype=float
        )

    @cached_property
    def report(self) -> ValidationReport:
        return validate(self)


def _freeze(data, sizes, where):
    if not sizes:
        return _as_rational(data)
    try:
        n = len(data)
    except TypeError as exc:
        raise ShapeError(f"expected a sequence at index {where}") from exc
    if n != sizes[0]:
        raise ShapeError(f"dimension {len(where)} at index {where} has length {n}, expected {sizes[0]}")
    return tuple(_freeze(item, sizes[1:], where + (i,)) for i, item in enumerate(data))


def _check_same_shape(P: ConditionalDistribution, Q: ConditionalDistribution) -> None:
    if P.shape != Q.shape:
        raise ShapeError(f"shape mismatch: {P.shape} vs {Q.shape}")


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class ValidationReport:
    normalized: dict[tuple[int, int], bool]
    nonnegative: bool
    non_signaling: bool
    worst_violation: Fraction
    offending_indices: list[tuple]

    @property
    def valid(self) -> bool:
        """Normalized, nonnegative and non-signaling."""
        return self.nonnegative and self.non_signaling and all(self.normalized.values())


def validate(P: ConditionalDistribution) -> ValidationReport:
    """Check normalization, nonnegativity and both non-signaling conditions exactly.

    Offending entries are reported as tagged tuples, e.g.
    ``("alice-marginal", a, x, y)`` when sum_b P(ab|xy) differs from the
    value at ``y = 0``.
    """
    offending: list[tuple] = []
    worst = Fraction(0)
    normalized = {}
    nonnegative = True
    for x, y in P.inputs():
        block = P.row(x, y)
        total = sum((p for r in block for p in r), Fraction(0))
        normalized[(x, y)] = total == 1
        if total != 1:
            offending.append(("normalization", x, y))
            worst = max(worst, abs(total - 1))
        for a, r in enumerate(block):
            for b, p in enumerate(r):
                if p < 0:
                    nonnegative = False
                    offending.append(("negative", x, y, a, b))
                    worst = max(worst, -p)

    non_signaling = True
    alice = [[[sum(P.row(x, y)[a], Fraction(0)) for y in range(P.y_size)] for x in range(P.x_size)]
             for a in range(P.a_size)]
    for a, x in itertools.product(range(P.a_size), range(P.x_size)):
        ref = alice[a][x][0]
        for y in range(1, P.y_size):
            gap = abs(alice[a][x][y] - ref)
            if gap:
                non_signaling = False
                offending.append(("alice-marginal", a, x, y))
                worst = max(worst, gap)
    bob = [[[sum((P.row(x, y)[a][b] for a in range(P.a_size)), Fraction(0)) for x in range(P.x_size)]
            for y in range(P.y_size)] for b in range(P.b_size)]
    for b, y in itertools.product(range(P.b_size), range(P.y_size)):
        ref = bob[b][y][0]
        for x in range(1, P.x_size):
            gap = abs(bob[b][y][x] - ref)
            if gap:
                non_signaling = False
                offending.append(("bob-marginal", b, x, y))
                worst = max(worst, gap)

    return ValidationReport(normalized, nonnegative, non_signaling, worst, offending)


def require_non_signaling(P: ConditionalDistribution) -> None:
    rep = P.report
    if not rep.non_signaling:
        raise SignalingError(f"system is signaling (worst violation {rep.worst_violation})")


def marginal_a(P: ConditionalDistribution, a: int, x: int) -> Fraction:
    """P(a|x); defined only for non-signaling systems."""
    require_non_signaling(P)
    return sum(P.row(x, 0)[a], Fraction(0))


def marginal_b(P: ConditionalDistribution, b: int, y: int) -> Fraction:
    """P(b|y); defined only for non-signaling systems."""
    require_non_signaling(P)
    return sum((P.row(0, y)[a][b] for a in range(P.a_size)), Fraction(0))


# ---------------------------------------------------------------------------
# Distances and the CHSH fixture


def tv_per_input(P: ConditionalDistribution, Q: ConditionalDistribution) -> dict[tuple[int, int], Fraction]:
    _check_same_shape(P, Q)
    out = {}
    for x, y in P.inputs():
        l1 = sum(
            (abs(p - q) for rp, rq in zip(P.row(x, y), Q.row(x, y)) for p, q in zip(rp, rq)),
            Fraction(0),
        )
        out[(x, y)] = l1 / 2
    return out


def tv_distance(P: ConditionalDistribution, Q: ConditionalDistribution) -> Fraction:
    """Worst case over inputs of the total-variation distance between output laws."""
    return max(tv_per_input(P, Q).values())


def chsh_value(P: ConditionalDistribution) -> Fraction:
    """Winning probability in the CHSH game under uniform inputs."""
    if P.shape != (2, 2, 2, 2):
        raise ShapeError(f"CHSH needs binary inputs and outputs, got shape {P.shape}")
    win = Fraction(0)
    for (x, y, a, b), p in P.entries():
        if a ^ b == x & y:
            win += p
    return win / 4


# ---------------------------------------------------------------------------
# Common systems


def pr_box() -> ConditionalDistribution:
    """The Popescu-Rohrlich box: uniform outputs with a XOR b = x AND y."""
    half = Fraction(1, 2)
    return ConditionalDistribution.from_function(
        (2, 2, 2, 2), lambda x, y, a, b: half if a ^ b == x & y else 0
    )


def uniform_noise(x_size=2, y_size=2, a_size=2, b_size=2) -> ConditionalDistribution:
    u = Fraction(1, a_size * b_size)
    return ConditionalDistribution.from_function((x_size, y_size, a_size, b_size), lambda *_: u)


def deterministic(alpha, beta, a_size: int, b_size: int) -> ConditionalDistribution:
    """Local deterministic strategy a = alpha[x], b = beta[y]."""
    return ConditionalDistribution.from_function(
        (len(alpha), len(beta), a_size, b_size),
        lambda x, y, a, b: int(a == alpha[x] and b == beta[y]),
    )


def point_mass(a0: int, b0: int, x_size=2, y_size=2, a_size=2, b_size=2) -> ConditionalDistribution:
    return ConditionalDistribution.from_function(
        (x_size, y_size, a_size, b_size), lambda x, y, a, b: int(a == a0 and b == b0)
    )


# ---------------------------------------------------------------------------
# Rationalization


def _constraints(shape):
    """Rows and right-hand sides of normalization + non-signaling equalities."""
    xs, ys, as_, bs = shape
    n = xs * ys * as_ * bs

    def idx(x, y, a, b):
        return ((x * ys + y) * as_ + a) * bs + b

    rows, rhs = [], []
    one, zero = Fraction(1), Fraction(0)
    for x, y in itertools.product(range(xs), range(ys)):
        r = [zero] * n
        for a, b in itertools.product(range(as_), range(bs)):
            r[idx(x, y, a, b)] = one
        rows.append(r)
        rhs.append(one)
    for a, x, y in itertools.product(range(as_), range(xs), range(1, ys)):
        r = [zero] * n
        for b in range(bs):
            r[idx(x, y, a, b)] += 1
            r[idx(x, 0, a, b)] -= 1
        rows.append(r)
        rhs.append(zero)
    for b, y, x in itertools.product(range(bs), range(ys), range(1, xs)):
        r = [zero] * n
        for a in range(as_):
            r[idx(x, y, a, b)] += 1
            r[idx(0, y, a, b)] -= 1
        rows.append(r)
        rhs.append(zero)
    return rows, rhs


def _repair(flat: list[Fraction], shape) -> list[Fraction]:
    rows, rhs = _constraints(shape)
    proj = _exact.project_affine(flat, rows, rhs)
    negatives = [p for p in proj if p < 0]
    if not negatives:
        return proj
    u = Fraction(1, shape[2] * shape[3])
    # Smallest w with (1-w) p + w u >= 0 for every entry.
    w = max(-p / (u - p) for p in negatives)
    return [(1 - w) * p + w * u for p in proj]


def rationalize(table, max_denominator: int, tol: float = 1e-6) -> ConditionalDistribution:
    """Exact, exactly non-signaling system entrywise within ``tol`` of a float table.

    Entries are rounded to the nearest fraction with denominator at most M,
    projected exactly onto the normalization and non-signaling equalities,
    and mixed with uniform noise by the smallest weight that removes any
    negative entries. M runs through 1, 2, 4, ... up to ``max_denominator``
    and the first candidate within ``tol`` is returned.
    """
    arr = np.asarray(table, dtype=float)
    if arr.ndim != 4 or 0 in arr.shape:
        raise ShapeError(f"expected a non-empty 4-d table, got shape {arr.shape}")
    if max_denominator < 1:
        raise ValueError("max_denominator must be >= 1")
    shape = tuple(int(s) for s in arr.shape)
    values = arr.ravel()

    denominators = []
    m = 1
    while m < max_denominator:
        denominators.append(m)
        m *= 2
    denominators.append(int(max_denominator))

    best = math.inf
    for m in denominators:
        rounded = [Fraction(float(v)).limit_denominator(m) for v in values]
        repaired = _repair(rounded, shape)
        err = max(abs(float(p) - float(v)) for p, v in zip(repaired, values))
        best = min(best, err)
        if err <= tol:
            nested = np.array(repaired, dtype=object).reshape(shape).tolist()
            return ConditionalDistribution(*shape, nested)
    raise RationalizeError(
        f"no exactly non-signaling rational system with denominators <= {max_denominator} "
        f"lies within {tol:g} of the input (closest found: {best:.3g}); "
        "try a larger max_denominator, or the input is not approximately non-signaling"
    )


# ---------------------------------------------------------------------------
# Sampling


def sample(P: ConditionalDistribution, x: int, y: int, rng: np.random.Generator, size=None):
    """Draw (a, b) from P(.,.|x,y) exactly.

    With ``size`` set, returns two integer arrays of that many draws.
    """
    block = P.row(x, y)
    cells = [(a, b, p) for a, r in enumerate(block) for b, p in enumerate(r) if p]
    scale = math.lcm(*(p.denominator for _, _, p in cells))
    cuts = list(itertools.accumulate(int(p * scale) for _, _, p in cells))
    if cuts[-1] != scale:
        raise ShapeError(f"row (x={x}, y={y}) is not normalized")
    if size is None:
        k = bisect.bisect_right(cuts, uniform_int(rng, scale))
        return cells[k][0], cells[k][1]
    a_of = np.array([c[0] for c in cells])
    b_of = np.array([c[1] for c in cells])
    if scale > 2**62:
        k = np.array([bisect.bisect_right(cuts, uniform_int(rng, scale)) for _ in range(size)])
    else:
        k = np.searchsorted(np.array(cuts, dtype=np.int64), rng.integers(scale, size=size), side="right")
    return a_of[k], b_of[k]
