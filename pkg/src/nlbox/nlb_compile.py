"""Order-2 families from non-local boxes.

An order-2 family is fixed by the bit ``h(x, y) = f_xy(0)``: the two outputs
always satisfy ``a XOR b = h(x, y)``. Writing

    h(x, y) = lam(x) XOR mu(y) XOR  XOR_j alpha_j(x) beta_j(y)

each product term costs one box queried on ``(alpha_j(x), beta_j(y))``,
whose outputs ``u_j, v_j`` satisfy ``u_j XOR v_j = alpha_j(x) beta_j(y)``.
The local terms cost nothing. A shared uniform bit ``r`` masks both
outputs so that each side's output is uniform:

    a = r XOR lam(x) XOR  XOR_j u_j
    b = r XOR mu(y)  XOR  XOR_j v_j

The product terms come from an indicator expansion over the smaller input
side, with equal coefficient vectors merged into a single term.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ResourceCapError, ShapeError
from .model import ConditionalDistribution
from .permutation import DEFAULT_TABLE_CAP, PermutationFamily, as_input, nlb

MAX_GATES = 16

_NLB = nlb()


@dataclass(frozen=True, eq=False)
class BooleanProfile:
    h: np.ndarray  # uint8, (x_size, y_size), flat input order

    @property
    def shape(self):
        return self.h.shape


@dataclass(frozen=True, eq=False)
class Monomial:
    alpha: np.ndarray  # bit per Alice input
    beta: np.ndarray  # bit per Bob input


@dataclass(frozen=True, eq=False)
class NLBCircuit:
    x_size: int
    y_size: int
    monomials: tuple[Monomial, ...]
    alice_local: np.ndarray
    bob_local: np.ndarray
    x_shape: tuple[int, ...] | None = None
    y_shape: tuple[int, ...] | None = None

    @property
    def gates(self) -> int:
        return len(self.monomials)

    def xor_table(self) -> np.ndarray:
        """h reconstructed from the terms, shape (x_size, y_size)."""
        h = self.alice_local[:, None] ^ self.bob_local[None, :]
        for m in self.monomials:
            h = h ^ (m.alpha[:, None] & m.beta[None, :])
        return h

    def flat(self, x, y) -> tuple[int, int]:
        if self.x_shape is None:
            return as_input(x)[0], as_input(y)[0]
        return (
            int(np.ravel_multi_index(as_input(x), self.x_shape)),
            int(np.ravel_multi_index(as_input(y), self.y_shape)),
        )


def profile(D2: PermutationFamily, cap: int = DEFAULT_TABLE_CAP) -> BooleanProfile:
    if D2.d != 2:
        raise ShapeError(f"profile needs an order-2 family, got order {D2.d}")
    h = np.asarray(D2.table(cap)[:, :, 0], dtype=np.uint8)
    h.setflags(write=False)
    return BooleanProfile(h)


def decompose(h: BooleanProfile) -> tuple[list[Monomial], np.ndarray, np.ndarray]:
    """Product terms and the two local terms ``(monomials, lam, mu)``."""
    t = np.asarray(h.h, dtype=np.uint8)
    transpose = t.shape[0] < t.shape[1]
    if transpose:
        t = t.T
    # Expand over the columns of t (the smaller side): t(x, y) = t(x, 0) XOR [y != 0] (t(x, y) XOR t(x, 0)).
    nx, ny = t.shape
    lam = t[:, 0].copy()
    mu = np.zeros(ny, dtype=np.uint8)
    grouped: dict[bytes, np.ndarray] = {}
    order: list[bytes] = []
    for y0 in range(1, ny):
        alpha = t[:, y0] ^ t[:, 0]
        if not alpha.any():
            continue
        if alpha.all():
            mu[y0] ^= 1
            continue
        key = alpha.tobytes()
        if key not in grouped:
            grouped[key] = np.zeros(ny, dtype=np.uint8)
            order.append(key)
        grouped[key][y0] = 1
    monos = [Monomial(np.frombuffer(k, dtype=np.uint8).copy(), grouped[k]) for k in order]
    if transpose:
        monos = [Monomial(m.beta, m.alpha) for m in monos]
        lam, mu = mu, lam
        # keep any constant on Alice's side
        c = mu[0]
        lam, mu = lam ^ c, mu ^ c
    return monos, lam, mu


def compile_d2(D2: PermutationFamily, cap: int = DEFAULT_TABLE_CAP) -> NLBCircuit:
    prof = profile(D2, cap)
    monos, lam, mu = decompose(prof)
    x_shape = D2.x_shape if len(D2.x_shape) > 1 else None
    y_shape = D2.y_shape if len(D2.y_shape) > 1 else None
    return NLBCircuit(prof.shape[0], prof.shape[1], tuple(monos), lam, mu, x_shape, y_shape)


def eval_circuit(circuit: NLBCircuit, x, y, rng: np.random.Generator) -> tuple[int, int]:
    """One run: every gate is a fresh box instance, plus one shared mask bit."""
    x, y = circuit.flat(x, y)
    r = int(rng.integers(2))
    a = r ^ int(circuit.alice_local[x])
    b = r ^ int(circuit.bob_local[y])
    for m in circuit.monomials:
        box = _NLB.instance(rng)
        a ^= box.alice(int(m.alpha[x]))
        b ^= box.bob(int(m.beta[y]))
    return a, b


def eval_circuit_vec(circuit: NLBCircuit, xf: np.ndarray, yf: np.ndarray, rng: np.random.Generator):
    """Vectorized runs on flat input indices."""
    n = len(xf)
    r = rng.integers(2, size=n, dtype=np.uint8)
    a = r ^ circuit.alice_local[xf]
    b = r ^ circuit.bob_local[yf]
    for m in circuit.monomials:
        u = rng.integers(2, size=n, dtype=np.uint8)
        a = a ^ u
        b = b ^ u ^ (m.alpha[xf] & m.beta[yf])
    return a.astype(np.int64), b.astype(np.int64)


def _enumeration_outputs(circuit: NLBCircuit):
    m = circuit.gates
    if m > MAX_GATES:
        raise ResourceCapError(f"{m} gates exceeds the enumeration cap of {MAX_GATES}", size=m, cap=MAX_GATES)
    bits = np.array(list(itertools.product((0, 1), repeat=m + 1)), dtype=np.uint8).reshape(-1, m + 1)
    r, u = bits[:, 0], bits[:, 1:]
    return r, u


def _pair_law_flat(circuit: NLBCircuit, xf: int, yf: int, r, u) -> list[int]:
    prod = np.array([m.alpha[xf] & m.beta[yf] for m in circuit.monomials], dtype=np.uint8)
    a = r ^ circuit.alice_local[xf]
    b = r ^ circuit.bob_local[yf]
    if circuit.gates:
        a = a ^ (u.sum(axis=1) % 2).astype(np.uint8)
        b = b ^ ((u ^ prod).sum(axis=1) % 2).astype(np.uint8)
    return np.bincount(2 * a.astype(np.int64) + b, minlength=4).tolist()


def circuit_exact_distribution(circuit: NLBCircuit, cap: int = DEFAULT_TABLE_CAP) -> ConditionalDistribution:
    """Exact law by enumerating the mask bit and every gate's Alice output."""
    X, Y = circuit.x_size, circuit.y_size
    if X * Y * 4 > cap:
        raise ResourceCapError(f"distribution of {X * Y * 4} entries exceeds cap {cap}", size=X * Y * 4, cap=cap)
    r, u = _enumeration_outputs(circuit)
    total = len(r)
    probs = []
    for x in range(X):
        px = []
        for y in range(Y):
            c = _pair_law_flat(circuit, x, y, r, u)
            px.append([[Fraction(c[2 * i + j], total) for j in range(2)] for i in range(2)])
        probs.append(px)
    return ConditionalDistribution(X, Y, 2, 2, probs)


def circuit_pair_law(circuit: NLBCircuit, x, y) -> dict[tuple[int, int], Fraction]:
    """Exact output law at one (possibly nested) input pair.

    The mask bit makes ``a`` uniform whatever the box outputs are, and
    ``a XOR b`` is fixed by the terms, so no enumeration is needed.
    """
    xf, yf = circuit.flat(x, y)
    h = int(circuit.alice_local[xf] ^ circuit.bob_local[yf])
    for m in circuit.monomials:
        h ^= int(m.alpha[xf] & m.beta[yf])
    half = Fraction(1, 2)
    return {(0, h): half, (1, 1 - h): half}
