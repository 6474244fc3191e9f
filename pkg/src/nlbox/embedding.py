"""Embedding a rational non-signaling system into a permutation family.

With ``d`` the least common multiple of the denominators of P, the output
set ``S_d`` is cut, for each input, into blocks of size ``d P(a|x)`` (Alice)
and ``d P(b|y)`` (Bob). Each Alice block is cut again into sub-blocks of
size ``d P(ab|xy)`` in increasing ``b``, and each Bob block into sub-blocks
of the same sizes in increasing ``a``. ``f_xy`` maps every Alice sub-block
onto the matching Bob sub-block in order. Decoding an output of the family
to the block that contains it reproduces P exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ResourceCapError, ShapeError, SignalingError
from .model import ConditionalDistribution, marginal_a, marginal_b
from .permutation import DEFAULT_TABLE_CAP, TableFamily

ALICE, BOB = "alice", "bob"


def compute_order(P: ConditionalDistribution) -> int:
    """Smallest d with d * P(ab|xy) integral for every entry."""
    return math.lcm(*(p.denominator for _, p in P.entries()))


@dataclass(frozen=True)
class Partitioning:
    """Blocks of ``S_d`` as ``range`` objects.

    ``alice[x][a]`` is A_ax, ``bob[y][b]`` is B_by, and
    ``alice_joint[x][y][a][b]`` / ``bob_joint[x][y][a][b]`` are A_abxy / B_abxy.
    """

    order: int
    alice: tuple
    bob: tuple
    alice_joint: tuple
    bob_joint: tuple


def _blocks(start: int, sizes) -> list[range]:
    out = []
    for n in sizes:
        out.append(range(start, start + n))
        start += n
    return out


def _scaled(p: Fraction, d: int) -> int:
    v = p * d
    if v.denominator != 1:
        raise ShapeError(f"{p} is not a multiple of 1/{d}")
    return v.numerator


def build_partitions(P: ConditionalDistribution, d: int) -> Partitioning:
    if not P.report.valid:
        raise SignalingError("embedding needs a normalized, nonnegative, non-signaling system")
    X, Y, A, B = P.shape
    alice = tuple(
        tuple(_blocks(0, [_scaled(marginal_a(P, a, x), d) for a in range(A)])) for x in range(X)
    )
    bob = tuple(
        tuple(_blocks(0, [_scaled(marginal_b(P, b, y), d) for b in range(B)])) for y in range(Y)
    )
    alice_joint = []
    bob_joint = []
    for x in range(X):
        aj, bj = [], []
        for y in range(Y):
            n = [[_scaled(P[x, y, a, b], d) for b in range(B)] for a in range(A)]
            aj.append(tuple(tuple(_blocks(alice[x][a].start, n[a])) for a in range(A)))
            per_b = [_blocks(bob[y][b].start, [n[a][b] for a in range(A)]) for b in range(B)]
            bj.append(tuple(tuple(per_b[b][a] for b in range(B)) for a in range(A)))
        alice_joint.append(tuple(aj))
        bob_joint.append(tuple(bj))
    return Partitioning(d, alice, bob, tuple(alice_joint), tuple(bob_joint))


def build_family(P: ConditionalDistribution, d: int, partitioning: Partitioning) -> TableFamily:
    """f_xy sends the i-th element of A_abxy to the i-th element of B_abxy."""
    X, Y, A, B = P.shape
    table = np.full((X, Y, d), -1, dtype=np.int64)
    for x in range(X):
        for y in range(Y):
            for a in range(A):
                for b in range(B):
                    src = partitioning.alice_joint[x][y][a][b]
                    dst = partitioning.bob_joint[x][y][a][b]
                    if len(src) != len(dst):
                        raise ShapeError(f"block sizes differ at (x={x}, y={y}, a={a}, b={b})")
                    table[x, y, src.start:src.stop] = np.arange(dst.start, dst.stop)
    return TableFamily(d, table)


def _decode_table(blocks, d: int) -> np.ndarray:
    out = np.empty((len(blocks), d), dtype=np.int64)
    for i, per in enumerate(blocks):
        for label, r in enumerate(per):
            out[i, r.start:r.stop] = label
    return out


@dataclass(frozen=True, eq=False)
class Embedding:
    source: ConditionalDistribution
    order: int
    family: TableFamily
    partitioning: Partitioning
    alice_decode: np.ndarray  # [x, raw] -> a
    bob_decode: np.ndarray  # [y, raw] -> b


def embed(P: ConditionalDistribution, max_order: int | None = None) -> Embedding:
    d = compute_order(P)
    if max_order is not None and d > max_order:
        raise ResourceCapError(f"embedding order {d} exceeds cap {max_order}", order=d, cap=max_order)
    parts = build_partitions(P, d)
    fam = build_family(P, d, parts)
    dec_a = _decode_table(parts.alice, d)
    dec_b = _decode_table(parts.bob, d)
    dec_a.setflags(write=False)
    dec_b.setflags(write=False)
    return Embedding(P, d, fam, parts, dec_a, dec_b)


def decode(embedding: Embedding, side: str, raw, inp):
    """Output label of the block containing ``raw``; arrays decode elementwise."""
    if side == ALICE:
        return embedding.alice_decode[inp, raw]
    if side == BOB:
        return embedding.bob_decode[inp, raw]
    raise ValueError(f"side must be {ALICE!r} or {BOB!r}")


def decode_distribution(embedding: Embedding, raw: ConditionalDistribution) -> ConditionalDistribution:
    """Push a law on ``S_d x S_d`` (per input pair) through the relabeling."""
    X, Y, A, B = embedding.source.shape
    zero = Fraction(0)
    probs = []
    for x in range(X):
        px = []
        for y in range(Y):
            block = [[zero] * B for _ in range(A)]
            for a1, rowp in enumerate(raw.row(x, y)):
                a = int(embedding.alice_decode[x, a1])
                for b1, p in enumerate(rowp):
                    if p:
                        block[a][int(embedding.bob_decode[y, b1])] += p
            px.append(block)
        probs.append(px)
    return ConditionalDistribution(X, Y, A, B, probs)


def exact_embedded_distribution(embedding: Embedding, cap: int = DEFAULT_TABLE_CAP) -> ConditionalDistribution:
    """Law of the decoded outputs of one use of the family; equals the source exactly."""
    X, Y, A, B = embedding.source.shape
    d = embedding.order
    if X * Y * d > cap:
        raise ResourceCapError(f"enumeration of {X * Y * d} points exceeds cap {cap}", order=d, cap=cap)
    t = embedding.family.table()
    probs = []
    for x in range(X):
        px = []
        for y in range(Y):
            counts = np.zeros((A, B), dtype=np.int64)
            np.add.at(counts, (embedding.alice_decode[x], embedding.bob_decode[y, t[x, y]]), 1)
            px.append([[Fraction(int(c), d) for c in r] for r in counts])
        probs.append(px)
    return ConditionalDistribution(X, Y, A, B, probs)
