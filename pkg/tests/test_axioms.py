import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risksharing import axioms as A
from risksharing import metrics as M
from risksharing import rules as R
from risksharing.battery import make_battery
from risksharing.prob_core import Permutation, make_pool

from .conftest import int_pools

SWAP = [Permutation((1, 0))]


def broken_half(pool):
    return pool.losses / 2


class TestFullAllocation:
    def test_uniform_holds(self, pool_a):
        assert A.check_full_allocation(R.uniform(), pool_a).holds

    def test_broken_rule_has_witness_atom(self, pool_a):
        report = A.check_full_allocation(broken_half, pool_a)
        assert report.violated
        assert report.witness.atoms == (0,) and report.witness.lhs == 1 and report.witness.rhs == 2

    def test_conditional_mean_on_tied_pool(self, tied_pool):
        assert A.check_full_allocation(R.conditional_mean(), tied_pool).holds

    def test_degenerate_is_skipped_with_reason(self, tied_pool):
        report = A.check_full_allocation(R.covariance_linear(), tied_pool)
        assert report.verdict is A.Verdict.SKIPPED and report.reason == "var(S)=0"


class TestReshuffling:
    def test_mean_proportional_swap(self, pool_a):
        assert A.check_reshuffling(R.mean_proportional(), pool_a, SWAP).holds
        swapped = R.apply(R.mean_proportional(), make_pool([[2, 2, 2], [0, 4, 8]], [0.5, 0.25, 0.25]))
        np.testing.assert_allclose(swapped.values[0], [0.8, 2.4, 4.0])

    def test_all_in_one_violated(self, pool_a):
        report = A.check_reshuffling(R.all_in_one(), pool_a, SWAP)
        assert report.violated
        w = report.witness
        assert w.participant == 0 and w.lhs == 2 and w.rhs == 0

    def test_order_statistics_violated_even_on_symmetric_pool(self, tied_pool, pool_a):
        # both orientations sort to [[1,1],[3,3]], so C1[X^pi] = (1,1) while C2[X] = (3,3)
        sym = A.check_reshuffling(R.order_statistics(), tied_pool, SWAP)
        assert sym.violated and (sym.witness.lhs, sym.witness.rhs) == (1, 3)
        report = A.check_reshuffling(R.order_statistics(), pool_a, SWAP)
        assert report.violated
        # C1[X^pi] = (0, 2, 2) against C2[X] = (2, 4, 8)
        assert (report.witness.lhs, report.witness.rhs) == (0, 2)

    def test_default_permutations_are_exhaustive(self, pool_a):
        assert A.check_reshuffling(R.uniform(), pool_a).holds


class TestSourceAnonymous:
    def test_uniform(self, pool_a):
        assert A.check_source_anonymous(R.uniform(), pool_a).holds

    def test_mean_proportional_violated(self, pool_a):
        report = A.check_source_anonymous(R.mean_proportional(), pool_a, SWAP)
        assert report.violated
        assert report.witness.lhs == pytest.approx(0.8) and report.witness.rhs == pytest.approx(1.2)

    def test_order_statistics(self, pool_a, pool_b):
        for pool in (pool_a, pool_b):
            assert A.check_source_anonymous(R.order_statistics(), pool).holds


class TestAggregate:
    def test_conditional_mean(self, tied_pool):
        assert A.check_aggregate(R.conditional_mean(), tied_pool).holds

    def test_stand_alone_violated(self, tied_pool):
        report = A.check_aggregate(R.stand_alone(), tied_pool)
        assert report.violated and {report.witness.lhs, report.witness.rhs} == {1.0, 3.0}

    @pytest.mark.parametrize("rule", [R.stand_alone(), R.order_statistics(), R.mean_proportional()])
    def test_distinct_s_is_vacuous(self, rule, pool_a):
        assert A.check_aggregate(rule, pool_a).holds


class TestStronglyAggregate:
    def test_uniform(self, battery):
        for n, idx in battery.by_n().items():
            assert A.check_strongly_aggregate(R.uniform(), [battery.pools[i] for i in idx]).holds

    def test_mean_proportional_violated(self, pool_a):
        other = make_pool([[2, 6, 10], [0, 0, 0]], [0.5, 0.25, 0.25])
        report = A.check_strongly_aggregate(R.mean_proportional(), [pool_a, other])
        assert report.violated
        assert report.witness.lhs == pytest.approx(1.2) and report.witness.rhs == 2

    def test_all_in_one(self, battery):
        assert A.check_property(R.all_in_one(), A.STRONGLY_AGGREGATE, battery).holds

    def test_no_collision_is_inconclusive(self, pool_a):
        other = make_pool([[1, 1, 1], [0, 0, 0]], [0.5, 0.25, 0.25])
        report = A.check_strongly_aggregate(R.uniform(), [pool_a, other])
        assert report.verdict is A.Verdict.INCONCLUSIVE

    def test_rejects_mixed_n(self, pool_a):
        with pytest.raises(ValueError):
            A.check_strongly_aggregate(R.uniform(), [pool_a, make_pool([[1, 1, 1]], [0.5, 0.25, 0.25])])


class TestQRatio:
    def test_mean_proportional_source_anonymous_ratio(self, battery):
        kind = A.source_anonymous_q_ratio(M.mean())
        assert A.check_property(R.mean_proportional(degenerate="uniform"), kind, battery).holds

    def test_uniform_with_constant_metric(self, battery):
        kind = A.source_anonymous_q_ratio(M.constant(1))
        assert A.check_property(R.uniform(), kind, battery).holds

    def test_weighted_rule_violated(self, pool_a):
        rule = R.weighted_q_proportional(M.mean(), (1, 2))
        assert A.check_source_anonymous_q_ratio(rule, M.mean(), pool_a, SWAP).violated

    def test_strongly_aggregate_ratio_mean_proportional(self, battery):
        kind = A.strongly_aggregate_q_ratio(M.mean())
        assert A.check_property(R.mean_proportional(degenerate="uniform"), kind, battery).holds

    def test_ratio_is_s_over_mean_s(self, pool_a):
        c = R.apply(R.mean_proportional(), pool_a).values
        np.testing.assert_allclose(c[0] / 3, np.array([2, 6, 10]) / 5)

    def test_uniform_violates_strongly_aggregate_ratio(self, battery):
        assert A.check_property(R.uniform(), A.strongly_aggregate_q_ratio(M.mean()), battery).violated

    def test_scenario_proportional(self, battery):
        kind = A.strongly_aggregate_q_ratio(M.scenario(0))
        assert A.check_property(R.scenario_proportional(0, degenerate="uniform"), kind, battery).holds

    def test_unaudited_metric_is_refused(self, battery):
        report = A.check_strongly_aggregate_q_ratio(R.q_proportional(M.stddev()), M.stddev(), battery.tagged("family:n2.0"))
        assert report.verdict is A.Verdict.REFUSED and "stddev" in report.reason

    def test_refusal_can_be_bypassed(self, battery):
        pools = battery.tagged("family:n2.0")
        rule = R.q_proportional(M.stddev(), degenerate="uniform")
        report = A.check_strongly_aggregate_q_ratio(rule, M.stddev(), pools, require_audit=False)
        assert report.verdict is not A.Verdict.REFUSED


class TestStandardized:
    def test_covariance_linear_source_anonymous(self, battery):
        kind = A.source_anonymous_std(M.mean(), M.cov())
        assert A.check_property(R.covariance_linear(degenerate="uniform"), kind, battery).holds

    def test_uniform_with_constant_metrics(self, battery):
        kind = A.source_anonymous_std(M.constant(1), M.lift(M.constant(1)))
        assert A.check_property(R.uniform(), kind, battery).holds

    def test_stand_alone_holds_when_rows_are_affinely_related(self, pool_b):
        # X2 - E[X2] = (X1 - E[X1]) / 4, so the standardized identity is exact here
        assert A.check_source_anonymous_std(R.stand_alone(), M.mean(), M.cov(), pool_b, SWAP).holds

    def test_stand_alone_violated_on_two_correlated_rows(self):
        pool = make_pool([[0, 4, 8], [3, 1, 2]], [0.5, 0.25, 0.25])
        report = A.check_source_anonymous_std(R.stand_alone(), M.mean(), M.cov(), pool, SWAP)
        assert report.violated

    def test_covariance_linear_strongly_aggregate(self, battery):
        kind = A.strongly_aggregate_std(M.mean(), M.cov())
        assert A.check_property(R.covariance_linear(degenerate="uniform"), kind, battery).holds

    def test_uniform_violates_strongly_aggregate_std(self, battery):
        assert A.check_property(R.uniform(), A.strongly_aggregate_std(M.mean(), M.cov()), battery).violated

    def test_lift_linear_holds_and_matches_mean_proportional(self, battery):
        rule = R.q1q2_linear(M.mean(), M.lift(M.mean()), degenerate="uniform")
        assert A.check_property(rule, A.strongly_aggregate_std(M.mean(), M.lift(M.mean())), battery).holds
        dev, _ = A.max_deviation(rule, R.mean_proportional(degenerate="uniform"), battery.pools)
        assert dev <= 1e-9

    def test_first_variance_is_refused(self, battery):
        kind = A.strongly_aggregate_std(M.mean(), M.first_variance())
        report = A.check_property(R.variance_linear(degenerate="uniform"), kind, battery)
        assert report.verdict is A.Verdict.REFUSED


class TestWitnessReplay:
    @given(int_pools(min_n=2, max_n=4), st.sampled_from(R.catalog(q=M.mean(), q2=M.cov())))
    def test_permutation_witnesses_replay_bit_for_bit(self, pool, rule):
        if rule.omegas and max(rule.omegas) >= pool.m:
            return
        kinds = [A.RESHUFFLING, A.SOURCE_ANONYMOUS, A.source_anonymous_q_ratio(M.mean()),
                 A.source_anonymous_std(M.mean(), M.cov()), A.AGGREGATE, A.FULL_ALLOCATION]
        for kind in kinds:
            report = A.check_property(rule, kind, [pool])
            if report.violated:
                again = A.replay_witness(rule, report)
                assert again.violated
                assert again.witness.lhs == report.witness.lhs and again.witness.rhs == report.witness.rhs

    def test_cross_pool_witnesses_replay(self, battery):
        for rule in R.catalog(q=M.mean(), q2=M.cov()):
            for kind in (A.STRONGLY_AGGREGATE, A.strongly_aggregate_q_ratio(M.mean()), A.strongly_aggregate_std(M.mean(), M.cov())):
                report = A.check_property(rule, kind, battery)
                if report.violated:
                    again = A.replay_witness(rule, report)
                    assert again.violated and (again.witness.lhs, again.witness.rhs) == (report.witness.lhs, report.witness.rhs)

    def test_holding_report_cannot_replay(self, pool_a):
        with pytest.raises(ValueError):
            A.replay_witness(R.uniform(), A.check_reshuffling(R.uniform(), pool_a))


class TestMerging:
    def test_order_independent(self, battery):
        rule = R.mean_proportional(degenerate="uniform")
        reports = [A.check_source_anonymous(rule, p) for p in battery.pools[:20]]
        first = A.merge_reports(reports)
        shuffled = reports[:]
        random.Random(5).shuffle(shuffled)
        again = A.merge_reports(shuffled)
        assert first.verdict == again.verdict
        assert first.witness.sort_key() == again.witness.sort_key()

    def test_associative(self, battery):
        rule = R.order_statistics()
        reports = [A.check_reshuffling(rule, p, pool_index=i) for i, p in enumerate(battery.pools[:12])]
        whole = A.merge_reports(reports)
        nested = A.merge_reports([A.merge_reports(reports[:5]), A.merge_reports(reports[5:])])
        assert whole.to_dict() == nested.to_dict()

    def test_verdict_precedence(self, pool_a, tied_pool):
        held = A.check_full_allocation(R.uniform(), pool_a)
        skipped = A.check_full_allocation(R.covariance_linear(), tied_pool)
        assert A.merge_reports([skipped, held]).verdict is A.Verdict.HOLDS
        assert A.merge_reports([skipped]).verdict is A.Verdict.SKIPPED


class TestDeterminism:
    def test_same_seed_same_reports(self):
        rule = R.conditional_mean(degenerate="uniform")
        a = A.check_property(rule, A.STRONGLY_AGGREGATE, make_battery(seed=4)).to_dict()
        b = A.check_property(rule, A.STRONGLY_AGGREGATE, make_battery(seed=4)).to_dict()
        assert a == b


class TestPropertyKind:
    def test_parameterized_kinds_need_metrics(self):
        with pytest.raises(ValueError):
            A.PropertyKind("source_anonymous_q_ratio")
        with pytest.raises(ValueError):
            A.PropertyKind("bogus")

    def test_labels_and_axiom_numbers(self):
        kind = A.strongly_aggregate_std(M.mean(), M.cov())
        assert kind.label == "strongly_aggregate_std[mean;cov]" and kind.axiom == 7
        assert A.RESHUFFLING.axiom == 1 and A.FULL_ALLOCATION.axiom is None
