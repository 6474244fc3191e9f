from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlbox.embedding import (
    ALICE,
    BOB,
    build_partitions,
    compute_order,
    decode,
    decode_distribution,
    embed,
    exact_embedded_distribution,
)
from nlbox.errors import ResourceCapError, SignalingError
from nlbox.model import ConditionalDistribution, deterministic, marginal_a, marginal_b, pr_box
from nlbox.permutation import nlb, to_distribution
from nlbox.systems import random_nonsignaling, shift_family


def test_pr_box_embeds_as_nlb():
    emb = embed(pr_box())
    assert emb.order == 2
    assert emb.family == nlb()


def test_local_deterministic_order_one():
    P = deterministic((1, 0), (2, 2), 2, 3)
    emb = embed(P)
    assert emb.order == 1
    assert exact_embedded_distribution(emb) == P


def test_order_is_lcm_of_denominators():
    P = ConditionalDistribution.from_function(
        (1, 1, 2, 2),
        lambda x, y, a, b: [[Fraction(1, 4), Fraction(1, 6)], [Fraction(1, 3), Fraction(1, 4)]][a][b],
    )
    assert compute_order(P) == 12


def test_partition_sizes_match_probabilities():
    P = random_nonsignaling(np.random.default_rng(4), shape=(2, 3, 3, 2))
    d = compute_order(P)
    parts = build_partitions(P, d)
    for x in range(2):
        assert sum(len(r) for r in parts.alice[x]) == d
        for a in range(3):
            assert len(parts.alice[x][a]) == d * marginal_a(P, a, x)
    for y in range(3):
        for b in range(2):
            assert len(parts.bob[y][b]) == d * marginal_b(P, b, y)
    for x in range(2):
        for y in range(3):
            for a in range(3):
                for b in range(2):
                    n = d * P[x, y, a, b]
                    sa, sb = parts.alice_joint[x][y][a][b], parts.bob_joint[x][y][a][b]
                    assert len(sa) == len(sb) == n
                    assert set(sa) <= set(parts.alice[x][a])
                    assert set(sb) <= set(parts.bob[y][b])


def test_signaling_rejected():
    P = ConditionalDistribution.from_function((2, 2, 2, 2), lambda x, y, a, b: int(a == 0 and b == x))
    with pytest.raises(SignalingError):
        embed(P)


def test_order_cap():
    P = random_nonsignaling(np.random.default_rng(0), shape=(2, 2, 3, 3), max_denominator=12)
    d = compute_order(P)
    with pytest.raises(ResourceCapError) as exc:
        embed(P, max_order=d - 1)
    assert exc.value.order == d


def test_decode_sides():
    emb = embed(random_nonsignaling(np.random.default_rng(7), shape=(2, 2, 3, 3)))
    raw = np.arange(emb.order)
    assert np.array_equal(decode(emb, ALICE, raw, 1), emb.alice_decode[1])
    assert decode(emb, BOB, 0, 0) == emb.bob_decode[0, 0]
    with pytest.raises(ValueError):
        decode(emb, "carol", 0, 0)


def test_decode_distribution_of_family_law():
    P = random_nonsignaling(np.random.default_rng(11), shape=(3, 2, 2, 3))
    emb = embed(P)
    assert decode_distribution(emb, to_distribution(emb.family)) == P


def test_permutation_family_reembeds_to_itself():
    P = to_distribution(shift_family(3))
    emb = embed(P)
    assert emb.order == 3
    assert exact_embedded_distribution(emb) == P


@given(st.integers(0, 2**32))
def test_round_trip_exact(seed):
    P = random_nonsignaling(np.random.default_rng(seed))
    emb = embed(P)
    assert exact_embedded_distribution(emb) == P


def test_cap_on_enumeration():
    emb = embed(random_nonsignaling(np.random.default_rng(3), shape=(3, 3, 3, 3), max_denominator=12))
    with pytest.raises(ResourceCapError):
        exact_embedded_distribution(emb, cap=1)
