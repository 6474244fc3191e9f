import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlbox.errors import ResourceCapError, ShapeError
from nlbox.nlb_compile import (
    MAX_GATES,
    BooleanProfile,
    circuit_exact_distribution,
    circuit_pair_law,
    compile_d2,
    decompose,
    eval_circuit,
    eval_circuit_vec,
    profile,
)
from nlbox.permutation import from_table, nlb, to_distribution
from nlbox.reduction import build_child, child_distribution
from nlbox.systems import random_family, shift_family


def family_from_h(h):
    return from_table(2, [[[v, 1 - v] for v in row] for row in h])


def test_nlb_profile():
    assert profile(nlb()).h.tolist() == [[0, 0], [0, 1]]


def test_profile_requires_order_two():
    with pytest.raises(ShapeError):
        profile(shift_family(3))


def test_nlb_uses_one_gate():
    c = compile_d2(nlb())
    assert c.gates == 1
    assert circuit_exact_distribution(c) == to_distribution(nlb())


def test_local_profiles_need_no_gates():
    for h in ([[0, 0], [0, 0]], [[1, 1], [1, 1]], [[0, 1], [0, 1]], [[0, 0], [1, 1]], [[1, 0, 1], [0, 1, 0]]):
        c = compile_d2(family_from_h(h))
        assert c.gates == 0
        assert np.array_equal(c.xor_table(), np.array(h))


def test_equality_function():
    # h(x, y) = [x == y] on 3 inputs
    h = [[int(x == y) for y in range(3)] for x in range(3)]
    c = compile_d2(family_from_h(h))
    assert c.gates <= 3
    assert circuit_exact_distribution(c) == to_distribution(family_from_h(h))


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32))
def test_decomposition_reconstructs(X, Y, seed):
    h = np.random.default_rng(seed).integers(2, size=(X, Y)).astype(np.uint8)
    monos, lam, mu = decompose(BooleanProfile(h))
    rec = lam[:, None] ^ mu[None, :]
    for m in monos:
        rec = rec ^ (m.alpha[:, None] & m.beta[None, :])
    assert np.array_equal(rec, h)
    assert len(monos) <= max(0, min(X, Y) - 1)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32))
def test_complete_on_random_families(X, Y, seed):
    F = random_family(np.random.default_rng(seed), 2, X, Y)
    c = compile_d2(F)
    assert c.gates <= min(X, Y)
    assert circuit_exact_distribution(c) == to_distribution(F)


def test_nested_inputs():
    F = build_child(shift_family(3))
    c = compile_d2(F)
    assert c.x_shape == (2, 3)
    for x in F.x_inputs():
        for y in F.y_inputs():
            assert circuit_pair_law(c, x, y) == child_distribution(F, x, y)


def test_sampled_runs(rng):
    F = random_family(rng, 2, 3, 4)
    c = compile_d2(F)
    for x, y in itertools.product(range(3), range(4)):
        for _ in range(20):
            a, b = eval_circuit(c, x, y, rng)
            assert F.apply(x, y, a) == b


def test_vectorized_runs_uniform(rng):
    F = random_family(rng, 2, 4, 4)
    c = compile_d2(F)
    xf = rng.integers(4, size=20000)
    yf = rng.integers(4, size=20000)
    a, b = eval_circuit_vec(c, xf, yf, rng)
    assert np.array_equal(F.table()[xf, yf, a], b)
    assert abs(a.mean() - 0.5) < 0.02


def test_enumeration_cap():
    X = MAX_GATES + 2
    h = np.eye(X, dtype=np.uint8)
    c = compile_d2(family_from_h(h))
    assert c.gates > MAX_GATES
    with pytest.raises(ResourceCapError):
        circuit_exact_distribution(c)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32))
def test_pair_law_matches_enumeration(X, Y, seed):
    c = compile_d2(random_family(np.random.default_rng(seed), 2, X, Y))
    full = circuit_exact_distribution(c)
    for x, y in itertools.product(range(X), range(Y)):
        law = circuit_pair_law(c, x, y)
        assert {k: v for k, v in law.items() if v} == {
            (a, b): p for a, r in enumerate(full.row(x, y)) for b, p in enumerate(r) if p
        }


def test_pair_law_beyond_enumeration_cap():
    X = MAX_GATES + 4
    h = np.eye(X, dtype=np.uint8)
    F = family_from_h(h)
    c = compile_d2(F)
    for x, y in [(0, 0), (3, 5), (X - 1, X - 1)]:
        assert circuit_pair_law(c, x, y) == child_distribution(F, x, y)
