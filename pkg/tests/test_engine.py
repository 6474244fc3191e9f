import json
from fractions import Fraction

import numpy as np
import pytest

from nlbox.engine import (
    Caps,
    compile_full,
    exact_protocol_distribution,
    raw_laws,
    resource_report,
    run_monte_carlo,
    success_probabilities,
)
from nlbox.errors import ResourceCapError, SignalingError
from nlbox.model import ConditionalDistribution, deterministic, pr_box, tv_distance, tv_per_input
from nlbox.permutation import to_distribution
from nlbox.reduction import chain_failure, plan_cascade, rounds_needed, success_bound
from nlbox.systems import random_family, random_nonsignaling, shift_family

SHIFT3 = to_distribution(shift_family(3))
SHIFT4 = to_distribution(shift_family(4))


def chi_square_ok(counts, probs, trials):
    expected = np.array(probs, dtype=float) * trials
    counts = np.asarray(counts, dtype=float)
    mask = expected > 0
    if counts[~mask].sum():
        return False
    df = int(mask.sum()) - 1
    if df == 0:
        return True
    chi2 = (((counts - expected) ** 2)[mask] / expected[mask]).sum()
    return chi2 <= df + 3 * np.sqrt(2 * df)


class TestCompile:
    def test_order_two_has_no_cascade(self):
        prot = compile_full(pr_box(), Fraction(1, 10), "nlb")
        assert prot.order == 2 and prot.rounds == () and prot.total_d2 == 1
        assert prot.circuit.gates == 1
        res = resource_report(prot)
        assert res["d2_per_trial"] == 1 and res["nlb_per_trial"] == 1
        assert res["nlb_count_is_estimate"] is False

    def test_order_three_plan(self):
        prot = compile_full(SHIFT3, 0.05)
        assert prot.rounds == (rounds_needed(3, 0.05)[0],) == (8,)
        assert [f.d for f in prot.levels] == [3, 2]

    def test_order_three_resources(self):
        prot = compile_full(SHIFT3, 0.01)
        res = resource_report(prot)
        assert res["d2_per_trial"] == 12
        assert res["nlb_count_is_estimate"] is True
        assert res["shared_biased_bits_per_trial"] == 12
        assert res["shared_mask_bits_per_trial"] == 0

    def test_nlb_mode_resources(self):
        prot = compile_full(SHIFT3, 0.05, "nlb")
        res = resource_report(prot)
        assert res["nlb_per_trial"] == 8 * prot.circuit.gates
        assert res["nlb_per_d2"] <= 6
        assert res["shared_mask_bits_per_trial"] == 8

    def test_two_levels(self):
        prot = compile_full(SHIFT4, 0.05)
        assert prot.rounds == (5, 14)
        assert [f.d for f in prot.levels] == [4, 3, 2]
        res = resource_report(prot)
        assert res["d2_per_trial"] == 70
        assert res["shared_biased_bits_per_trial"] == 5 + 70

    def test_local_system(self):
        P = deterministic((0, 1), (1, 0), 2, 2)
        prot = compile_full(P, 0)
        assert prot.order == 1 and prot.total_d2 == 0
        assert exact_protocol_distribution(prot) == P
        assert run_monte_carlo(prot, 100, 1).worst_tv == 0

    def test_rejects_signaling(self):
        P = ConditionalDistribution.from_function((2, 2, 2, 2), lambda x, y, a, b: int(a == 0 and b == x))
        with pytest.raises(SignalingError):
            compile_full(P, 0.1)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            compile_full(pr_box(), 0.1, mode="quantum")
        with pytest.raises(ValueError):
            compile_full(pr_box(), 1)
        with pytest.raises(ValueError):
            compile_full(SHIFT3, 0.1, rounds=(1, 2))

    def test_order_cap_names_d(self):
        with pytest.raises(ResourceCapError) as exc:
            compile_full(SHIFT4, 0.05, caps=Caps(max_order=3))
        assert exc.value.order == 4

    def test_instance_cap_names_d(self):
        with pytest.raises(ResourceCapError) as exc:
            compile_full(SHIFT4, 0.05, caps=Caps(max_d2_per_trial=50))
        assert exc.value.order == 4 and exc.value.size == 70

    def test_exact_cap(self):
        prot = compile_full(SHIFT4, 0.05, caps=Caps(max_exact_laws=10))
        with pytest.raises(ResourceCapError):
            exact_protocol_distribution(prot)


class TestExact:
    def test_two_rounds(self):
        prot = compile_full(SHIFT3, 0.05, rounds=(2,))
        assert set(success_probabilities(prot).values()) == {Fraction(19, 27)}

    def test_zero_rounds_is_independent_uniform(self):
        P = random_nonsignaling(np.random.default_rng(2), shape=(2, 2, 2, 3), max_denominator=6)
        depth = len(compile_full(P, 0.1).rounds)
        prot = compile_full(P, 0.1, rounds=(0,) * depth)
        Q = exact_protocol_distribution(prot)
        d, emb = prot.order, prot.embedding
        for (x, y, a, b), q in Q.entries():
            na = int(np.sum(emb.alice_decode[x] == a))
            nb = int(np.sum(emb.bob_decode[y] == b))
            assert q == Fraction(na * nb, d * d)

    @pytest.mark.parametrize("P", [SHIFT3, SHIFT4])
    def test_tv_decreases_in_rounds(self, P):
        depth = len(compile_full(P, 0.1).rounds)
        tvs = [tv_distance(exact_protocol_distribution(compile_full(P, 0.1, rounds=(n,) * depth)), P) for n in range(7)]
        assert all(b < a for a, b in zip(tvs, tvs[1:]))

    def test_matches_chain_law(self):
        for n in range(1, 7):
            prot = compile_full(SHIFT3, 0.05, rounds=(n,))
            for p in success_probabilities(prot).values():
                assert 1 - p == chain_failure(3, n)

    def test_modes_agree(self):
        for P in (SHIFT3, to_distribution(random_family(np.random.default_rng(8), 3, 3, 2))):
            a = exact_protocol_distribution(compile_full(P, 0.05, "ideal-d2"))
            b = exact_protocol_distribution(compile_full(P, 0.05, "nlb"))
            assert a == b

    def test_modes_agree_two_levels(self):
        a = raw_laws(compile_full(SHIFT4, 0.2, "ideal-d2"))
        b = raw_laws(compile_full(SHIFT4, 0.2, "nlb"))
        assert a == b

    def test_bound_compliance_with_budgeted_noise(self):
        # Order-2 boxes degraded by the full slack still meet every level's budget.
        prot = compile_full(SHIFT4, 0.05)
        noise = Fraction(repr(prot.plan.slack))
        succ = success_probabilities(prot, child_noise=noise)
        top = prot.plan.levels[0]
        for p in succ.values():
            assert p >= 1 - prot.delta
            assert float(p) >= success_bound(top.order, top.rounds, top.child_delta) - 1e-12
        Q = exact_protocol_distribution(prot, child_noise=noise)
        assert tv_distance(Q, SHIFT4) <= prot.delta

    def test_embedded_targets_within_budget(self):
        r = np.random.default_rng(12)
        checked = 0
        while checked < 5:
            P = random_nonsignaling(r, shape=(2, 2, 2, 2), max_denominator=4)
            prot = compile_full(P, Fraction(1, 20))
            if prot.order > 4:
                continue
            assert tv_distance(exact_protocol_distribution(prot), P) <= Fraction(1, 20)
            checked += 1

    def test_pr_box_exact(self):
        assert exact_protocol_distribution(compile_full(pr_box(), 0, "nlb")) == pr_box()


class TestMonteCarlo:
    def test_pr_box(self):
        rep = run_monte_carlo(compile_full(pr_box(), 0, "nlb"), 10**5, seed=4)
        assert rep.worst_tv <= Fraction(2, 100)
        assert rep.passed

    def test_deterministic(self):
        prot = compile_full(SHIFT3, 0.05)
        r1 = run_monte_carlo(prot, 20000, seed=99)
        r2 = run_monte_carlo(prot, 20000, seed=99)
        assert r1 == r2
        assert r1.to_dict(include_timing=False) == r2.to_dict(include_timing=False)
        r3 = run_monte_carlo(prot, 20000, seed=100)
        assert r3.counts != r1.counts

    def test_threads_do_not_change_result(self):
        prot = compile_full(SHIFT3, 0.05, "nlb")
        r1 = run_monte_carlo(prot, 30000, seed=5, threads=1, block_size=4096)
        r2 = run_monte_carlo(prot, 30000, seed=5, threads=4, block_size=4096)
        assert r1.counts == r2.counts

    def test_probabilities_sum_to_one(self):
        rep = run_monte_carlo(compile_full(SHIFT3, 0.1), 999, seed=1)
        assert all(sum(sum(r) for r in c) == 999 for c in rep.counts.values())
        emp = rep.empirical()
        assert all(sum(p for r in emp.row(x, y) for p in r) == 1 for x, y in emp.inputs())

    def test_agrees_with_exact(self):
        for mode in ("ideal-d2", "nlb"):
            prot = compile_full(SHIFT3, 0.05, mode, rounds=(2,))
            exact = exact_protocol_distribution(prot)
            rep = run_monte_carlo(prot, 40000, seed=17)
            for x, y in exact.inputs():
                assert chi_square_ok(rep.counts[(x, y)], [[float(p) for p in r] for r in exact.row(x, y)], 40000)

    def test_agrees_with_exact_two_levels_noisy(self):
        prot = compile_full(SHIFT4, 0.3, rounds=(2, 2))
        noise = Fraction(1, 10)
        exact = exact_protocol_distribution(prot, child_noise=noise)
        rep = run_monte_carlo(prot, 40000, seed=3, child_noise=noise)
        for x, y in exact.inputs():
            assert chi_square_ok(rep.counts[(x, y)], [[float(p) for p in r] for r in exact.row(x, y)], 40000)

    def test_embedded_target(self):
        P = random_nonsignaling(np.random.default_rng(21), shape=(2, 3, 3, 2), max_denominator=3)
        prot = compile_full(P, Fraction(1, 10))
        rep = run_monte_carlo(prot, 20000, seed=8)
        exact = exact_protocol_distribution(prot)
        assert rep.passed
        for x, y in exact.inputs():
            assert chi_square_ok(rep.counts[(x, y)], [[float(p) for p in r] for r in exact.row(x, y)], 20000)

    def test_budget_violation_detected(self):
        prot = compile_full(SHIFT3, 0.01, rounds=(1,))
        rep = run_monte_carlo(prot, 20000, seed=2)
        assert not rep.passed

    def test_report_fields(self):
        prot = compile_full(SHIFT3, 0.05)
        rep = run_monte_carlo(prot, 5000, seed=1)
        doc = rep.to_dict()
        assert doc["trials_per_input"] == 5000 and doc["seed"] == 1
        assert len(doc["per_input"]) == 4
        assert "timing" in doc and "timing" not in rep.to_dict(include_timing=False)
        assert rep.success_bound == pytest.approx(float(success_bound(3, 8, prot.plan.levels[0].child_delta)))
        json.dumps(doc)
        tv = tv_per_input(rep.empirical(), SHIFT3)
        assert tv == rep.tv

    def test_trials_must_be_positive(self):
        with pytest.raises(ValueError):
            run_monte_carlo(compile_full(pr_box(), 0), 0)
