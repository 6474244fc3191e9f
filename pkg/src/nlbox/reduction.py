"""Simulating an order-d permutation family from order-(d-1) ones.

Given a parent family ``f`` of order ``d``, the child family of order
``d - 1`` takes inputs ``(x, a0)`` and ``(y, b0)`` and is defined through
the relabelings

    r_a0(a) = d-1 if a == a0 else a        (S_{d-1} -> S_d minus a0)
    r_b0(b) = d-1 if b == b0 else b        (S_{d-1} -> S_d minus b0)

by ``g(a) = r_b0^{-1}(F(r_a0(a)))`` where ``F(t) = f(a0)`` when
``f(t) == b0`` and ``F(t) = f(t)`` otherwise.

A round of the simulation protocol starts from a pair ``(a0, b0)``, draws a
shared bit ``s`` with ``P(s=0) = 1/d``, queries one child on
``((x, a0), (y, b0))`` and outputs ``(a0, b0)`` if ``s == 0`` and
``(r_a0(a), r_b0(b))`` otherwise. The next round starts from that output.
An incorrect pair is kept incorrect with probability exactly ``2/d`` per
round; a correct pair stays correct.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterator, Mapping

import mpmath
import numpy as np

from .errors import NoReductionError, ResourceExhaustedError
from .permutation import BoxInstance, PermutationFamily, as_input
from .rng import bernoulli, to_fraction, uniform_int

_DPS = 50
PairDist = dict[tuple[int, int], Fraction]


def relabel(a0: int, d: int, a):
    """r_a0: S_{d-1} -> S_d minus {a0}. Works elementwise on arrays."""
    if isinstance(a, np.ndarray):
        return np.where(a == a0, d - 1, a)
    return d - 1 if a == a0 else a


def unrelabel(b0: int, d: int, v):
    """Inverse of r_b0 on S_d minus {b0}."""
    if isinstance(v, np.ndarray):
        return np.where(v == d - 1, b0, v)
    return b0 if v == d - 1 else v


@dataclass(frozen=True)
class RelabelPair:
    d: int
    a0: int
    b0: int

    def r_a(self, a):
        return relabel(self.a0, self.d, a)

    def r_b(self, b):
        return relabel(self.b0, self.d, b)

    def r_a_inv(self, v):
        return unrelabel(self.a0, self.d, v)

    def r_b_inv(self, v):
        return unrelabel(self.b0, self.d, v)


class ChildFamily(PermutationFamily):
    """Order-(d-1) family built from an order-d parent, evaluated by rule."""

    def __init__(self, parent: PermutationFamily):
        if parent.d <= 2:
            raise NoReductionError(
                f"cannot reduce a family of order {parent.d}; order 2 is the base case"
            )
        self.parent = parent
        self.d = parent.d - 1
        self.x_shape = parent.x_shape + (parent.d,)
        self.y_shape = parent.y_shape + (parent.d,)

    def apply(self, x, y, a):
        x, y = as_input(x), as_input(y)
        px, a0 = x[:-1], x[-1]
        py, b0 = y[:-1], y[-1]
        top = self.parent.d - 1
        t = top if a == a0 else a
        v = self.parent.apply(px, py, t)
        if v == b0:
            v = self.parent.apply(px, py, a0)
        return b0 if v == top else v

    def apply_vec(self, xs, ys, a):
        px, a0 = tuple(xs[:-1]), xs[-1]
        py, b0 = tuple(ys[:-1]), ys[-1]
        top = self.parent.d - 1
        t = np.where(a == a0, top, a)
        v = self.parent.apply_vec(px, py, t)
        hit = v == b0
        if np.any(hit):
            v = np.where(hit, self.parent.apply_vec(px, py, a0), v)
        return np.where(v == top, b0, v)

    def __repr__(self):
        return f"ChildFamily(d={self.d}, parent={self.parent!r})"


def build_child(parent: PermutationFamily) -> ChildFamily:
    return ChildFamily(parent)


# ---------------------------------------------------------------------------
# One round


@dataclass(frozen=True)
class RoundState:
    d: int
    a0: int
    b0: int
    s: int | None = None
    a_t: int | None = None
    b_t: int | None = None

    def advance(self) -> RoundState:
        """Start the next round from this round's outputs."""
        return RoundState(self.d, self.a_t, self.b_t)


def run_round(state: RoundState, child_sample: tuple[int, int], s: int) -> RoundState:
    a, b = child_sample
    if s == 0:
        a_t, b_t = state.a0, state.b0
    else:
        a_t = relabel(state.a0, state.d, a)
        b_t = relabel(state.b0, state.d, b)
    return replace(state, s=s, a_t=a_t, b_t=b_t)


def ideal_children(child: PermutationFamily, rng: np.random.Generator, noise=0) -> Iterator[BoxInstance]:
    """Unbounded supply of fresh child instances.

    With ``noise > 0`` each instance, with that probability, returns a ``b``
    drawn uniformly from the values other than ``g(a)``.
    """
    noise = to_fraction(noise)
    while True:
        yield NoisyInstance(child, rng, noise) if noise else BoxInstance(child, rng)


class NoisyInstance(BoxInstance):
    def __init__(self, family, rng, noise: Fraction):
        super().__init__(family, rng)
        self.noise = noise

    def _other(self, v: int) -> int:
        k = uniform_int(self._rng, self.family.d - 1)
        return k if k < v else k + 1

    def alice(self, x):
        second = self._bob is not None
        a = super().alice(x)
        if second and self.family.d > 1 and bernoulli(self._rng, self.noise):
            a = self._other(a)
            self._alice = (x, a)
        return a

    def bob(self, y):
        second = self._alice is not None
        b = super().bob(y)
        if second and self.family.d > 1 and bernoulli(self._rng, self.noise):
            b = self._other(b)
            self._bob = (y, b)
        return b


def simulate_parent(
    parent: PermutationFamily,
    x,
    y,
    n: int,
    child_source: Iterator[BoxInstance],
    rng: np.random.Generator,
    initial: tuple[int, int] | None = None,
) -> tuple[int, int]:
    """Run ``n`` rounds and return the final pair.

    ``initial`` forces the starting pair instead of drawing it uniformly.
    Each round consumes one instance from ``child_source``.
    """
    if n < 0:
        raise ValueError("number of rounds must be non-negative")
    d = parent.d
    x, y = as_input(x), as_input(y)
    if initial is None:
        a0, b0 = uniform_int(rng, d), uniform_int(rng, d)
    else:
        a0, b0 = initial
    state = RoundState(d, a0, b0)
    p_stay = Fraction(1, d)
    for i in range(n):
        s = 0 if bernoulli(rng, p_stay) else 1
        try:
            box = next(child_source)
        except StopIteration:
            raise ResourceExhaustedError(f"child source exhausted after {i} of {n} rounds") from None
        a = box.alice(x + (state.a0,))
        b = box.bob(y + (state.b0,))
        state = run_round(state, (a, b), s).advance()
    return state.a0, state.b0


# ---------------------------------------------------------------------------
# Exact evaluation


def child_distribution(child: PermutationFamily, x, y, error=0) -> PairDist:
    """Exact output law of one child instance under the uniform-alternative noise model."""
    error = to_fraction(error)
    k = child.d
    out: PairDist = {}
    for a in range(k):
        g = child.apply(x, y, a)
        out[(a, g)] = (1 - error) / k
        if error:
            for b in range(k):
                if b != g:
                    out[(a, b)] = error / (k * (k - 1))
    return out


def round_transition(parent: PermutationFamily, a0: int, b0: int, child_dist: Mapping) -> PairDist:
    """End-of-round law from the pair ``(a0, b0)`` given the child's output law."""
    d = parent.d
    out: PairDist = {(a0, b0): Fraction(1, d)}
    go = Fraction(d - 1, d)
    for (a, b), p in child_dist.items():
        if p:
            key = (relabel(a0, d, a), relabel(b0, d, b))
            out[key] = out.get(key, Fraction(0)) + go * p
    return out


def round_error_exact(parent: PermutationFamily, x, y, a0: int, b0: int) -> Fraction:
    """Probability that one round from ``(a0, b0)`` ends in an incorrect pair (ideal child)."""
    x, y = as_input(x), as_input(y)
    child = build_child(parent)
    law = round_transition(parent, a0, b0, child_distribution(child, x + (a0,), y + (b0,)))
    return sum((p for (a, b), p in law.items() if parent.apply(x, y, a) != b), Fraction(0))


def sim_distribution(
    parent: PermutationFamily,
    x,
    y,
    n: int,
    child_law: Callable[[tuple, tuple], Mapping] | None = None,
    child_error=0,
    initial: tuple[int, int] | None = None,
) -> PairDist:
    """Exact output law of ``n`` rounds, by propagating the pair-state Markov chain.

    ``child_law(x', y')`` gives the output law of a child instance; by
    default an ideal child degraded by ``child_error``.
    """
    d = parent.d
    x, y = as_input(x), as_input(y)
    if child_law is None:
        child = build_child(parent)
        child_law = lambda cx, cy: child_distribution(child, cx, cy, child_error)  # noqa: E731
    if initial is None:
        w = Fraction(1, d * d)
        state: PairDist = {(a, b): w for a in range(d) for b in range(d)}
    else:
        state = {tuple(initial): Fraction(1)}
    transitions: dict[tuple[int, int], PairDist] = {}
    for _ in range(n):
        nxt: PairDist = {}
        for key, p in state.items():
            if key not in transitions:
                a0, b0 = key
                transitions[key] = round_transition(parent, a0, b0, child_law(x + (a0,), y + (b0,)))
            for k2, q in transitions[key].items():
                nxt[k2] = nxt.get(k2, Fraction(0)) + p * q
        state = nxt
    return state


def failure_probability(parent: PermutationFamily, x, y, law: Mapping) -> Fraction:
    x, y = as_input(x), as_input(y)
    return sum((p for (a, b), p in law.items() if parent.apply(x, y, a) != b), Fraction(0))


def chain_failure(d: int, n: int) -> Fraction:
    """Closed-form failure after ``n`` rounds with ideal children: ((d-1)/d) (2/d)^n."""
    return Fraction(d - 1, d) * Fraction(2, d) ** n


# ---------------------------------------------------------------------------
# Round counts and error budgets


def _mpf(q: Fraction):
    return mpmath.mpf(q.numerator) / q.denominator


def rounds_needed(d: int, delta) -> tuple[int, float]:
    """Smallest round count n with (2/d)^n < delta, and the slack n - log_{2/d} delta.

    When log_{2/d} delta is an exact integer m the count is m + 1 (slack 1).
    """
    if d < 3:
        raise ValueError("rounds_needed requires d >= 3")
    delta = to_fraction(delta)
    if not 0 < delta < 1:
        raise ValueError(f"error budget must lie strictly between 0 and 1, got {delta}")
    with mpmath.workdps(_DPS):
        L = mpmath.log(_mpf(delta)) / mpmath.log(mpmath.mpf(2) / d)
        m = int(mpmath.nint(L))
        if m >= 0 and Fraction(2, d) ** m == delta:
            return m + 1, 1.0
        n = int(mpmath.ceil(L))
        return n, float(n - L)


def child_budget(d: int, delta, n: int, eps: float | None = None) -> float:
    """Per-child error budget that keeps n rounds within ``delta``.

    1 - ((1 - delta) / (1 - (2/d)^n))^(1/n), with (2/d)^n = (2/d)^eps * delta.
    """
    delta = to_fraction(delta)
    q = Fraction(2, d) ** n
    if q >= delta:
        raise ValueError(f"{n} rounds cannot reach error {delta} at order {d}")
    with mpmath.workdps(_DPS):
        ratio = (1 - _mpf(delta)) / (1 - _mpf(q))
        return float(1 - ratio ** (mpmath.mpf(1) / n))


def success_bound(d: int, n: int, child_delta=0):
    """Lower bound (1 - delta)^n (1 - (2/d)^n) on the success probability.

    Exact when ``child_delta`` is an int or Fraction, float otherwise.
    """
    if isinstance(child_delta, (int, Fraction)):
        return (1 - Fraction(child_delta)) ** n * (1 - Fraction(2, d) ** n)
    return (1.0 - float(child_delta)) ** n * (1.0 - (2.0 / d) ** n)


@dataclass(frozen=True)
class CascadeLevel:
    order: int
    rounds: int
    eps: float
    delta: float
    child_delta: float


@dataclass(frozen=True)
class CascadePlan:
    order: int
    delta_total: Fraction
    levels: tuple[CascadeLevel, ...] = field(default_factory=tuple)

    @property
    def total_d2(self) -> int:
        """Order-2 instances consumed per simulated use of the target."""
        if self.order < 2:
            return 0
        return math.prod(lv.rounds for lv in self.levels)

    @property
    def slack(self) -> float:
        """Budget left for the order-2 level, unused since it is realized exactly."""
        return self.levels[-1].child_delta if self.levels else 0.0

    def rounds(self) -> tuple[int, ...]:
        return tuple(lv.rounds for lv in self.levels)


def plan_cascade(d: int, delta_total) -> CascadePlan:
    """Round counts and budgets for every level from order d down to 3."""
    delta_total = to_fraction(delta_total)
    if d < 1:
        raise ValueError("order must be positive")
    if d <= 2:
        return CascadePlan(d, delta_total)
    levels = []
    budget = delta_total
    for k in range(d, 2, -1):
        n, eps = rounds_needed(k, budget)
        child = child_budget(k, budget, n, eps)
        levels.append(CascadeLevel(k, n, eps, float(budget), child))
        budget = Fraction(child)
    return CascadePlan(d, delta_total, tuple(levels))
