"""Standalone tests for CTR, RTR, gadget counts, normalization and ranking."""
import os
import sys
from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

sys.path.insert(0, os.path.dirname(__file__))

from fixtures import (  # noqa: E402
    chain_program,
    cls,
    fn,
    free_functions_program,
    method,
    multiple_inheritance_program,
    pcall,
    table,
    vcall,
)
from config.policies import BASELINE_ALL_FUNCTIONS, PolicyId, resolve_policy  # noqa: E402
from config.settings import get_property_examples  # noqa: E402
from services.facts_model import GadgetAnnotations, GadgetFlags, ProgramFacts  # noqa: E402
from services.metrics import (  # noqa: E402
    BaselineZero,
    PolicyAggregates,
    analyze_program,
    bcga,
    ctr,
    distribution,
    fcga,
    mean_aggregates,
    normalize,
    p90_index,
    rank,
    return_relation,
    round_half_up,
    rtr,
)
from services.policy_engine import PolicyEngine  # noqa: E402

# Normalized Avg / SD / 90p per policy, three programs.
PROGRAM_ROWS = {
    "JS": [(59.72, 21.0, 92.92), (7.41, 6.32, 17.71), (6.51, 6.44, 17.71), (0.26, 0.54, 1.54),
           (97.27, 0.0, 97.27), (0.23, 0.63, 0.86), (0.13, 0.46, 0.11), (0.13, 0.46, 0.1)],
    "TS": [(50.35, 15.79, 65.88), (14.97, 8.89, 21.21), (14.89, 9.01, 21.21), (0.18, 0.12, 0.27),
           (98.99, 0.0, 98.99), (1.26, 1.27, 4.27), (0.34, 0.51, 0.88), (0.34, 0.51, 0.88)],
    "C": [(55.23, 19.08, 86.62), (12.6, 12.16, 27.65), (12.52, 12.22, 27.65), (0.02, 0.11, 0.02),
          (86.79, 0.0, 86.79), (0.1, 0.43, 0.24), (0.05, 0.41, 0.03), (0.04, 0.41, 0.02)],
}

AVERAGE_ROW = [(55.1, 18.62, 81.8), (11.66, 9.12, 22.19), (11.3, 9.22, 22.19), (0.15, 0.25, 0.61),
               (94.35, 0.0, 94.35), (0.53, 0.77, 1.79), (0.17, 0.46, 0.34), (0.17, 0.46, 0.33)]

EXPECTED_ORDER = [4, 8, 7, 6, 3, 2, 1, 5]


def _aggregates(rows):
    return [
        PolicyAggregates(resolve_policy(str(i)), Decimal(str(avg)), Decimal(str(sd)), Decimal(str(p90)))
        for i, (avg, sd, p90) in enumerate(rows, start=1)
    ]


def _return_program():
    return free_functions_program(
        [fn("g", params=["i32"], direct_calls=2), fn("h", params=["i32"]), fn("k")],
        [pcall("x", ["i32"], enclosing="k"), pcall("y", ["i32"], enclosing="k")],
    )


def test_p90_of_one_to_ten():
    d = distribution(list(range(1, 11)))
    assert d.p90 == 9
    assert d.median == 5
    assert (d.min, d.max, d.n) == (1, 10, 10)
    assert d.average == Fraction(11, 2)


def test_constant_sizes_have_no_spread():
    d = distribution([5, 5, 5])
    assert sum(d.values) == 15
    assert d.sd == 0
    assert d.p90 == 5


def test_empty_distribution_is_zero():
    d = distribution([])
    assert d.n == 0
    assert (d.min, d.max, d.median, d.p90, d.average, d.sd) == (0, 0, 0, 0, 0, 0)


def test_p90_index_small_counts():
    assert [p90_index(n) for n in (1, 2, 9, 10, 11)] == [1, 2, 9, 9, 10]


@pytest.mark.parametrize("value,baseline,expected", [
    (19395, 32478, "59.72"),
    (30179, 32478, "92.92"),
    (6128, 6300, "97.27"),
    (2406, 32478, "7.41"),
    (2113, 32478, "6.51"),
    (1, 8, "12.50"),
])
def test_normalize_reference_values(value, baseline, expected):
    assert normalize(value, baseline) == Decimal(expected)


def test_rounding_is_half_up_from_exact_values():
    assert round_half_up(Decimal("2.675")) == Decimal("2.68")
    assert round_half_up(Fraction(1, 200)) == Decimal("0.01")
    assert normalize(Fraction(1, 3), 1) == Decimal("33.33")


def test_zero_baseline():
    with pytest.raises(BaselineZero):
        normalize(3, 0)


def test_rank_reproduces_average_row_order():
    ranking = rank(_aggregates(AVERAGE_ROW))
    assert [p.number for p in ranking.order] == EXPECTED_ORDER
    assert "equal average 0.17, lower 90p (0.33 < 0.34)" in ranking.trace[1]
    assert ranking.trace[0].endswith("lower average (0.15 < 0.17)")


def test_cross_program_means_rank_the_same():
    means = mean_aggregates([_aggregates(rows) for rows in PROGRAM_ROWS.values()])
    by_number = {a.policy.number: a for a in means}
    assert by_number[1].avg == Decimal("55.10")
    assert by_number[7].avg == by_number[8].avg == Decimal("0.17")
    assert (by_number[7].p90, by_number[8].p90) == (Decimal("0.34"), Decimal("0.33"))
    assert [p.number for p in rank(means).order] == EXPECTED_ORDER


def test_rank_ties_fall_back_to_sd_then_policy_number():
    same = Decimal("1.00")
    ranking = rank([
        PolicyAggregates(PolicyId.SRC_TYPES, same, Decimal("0.50"), same),
        PolicyAggregates(PolicyId.BIN_TYPES, same, Decimal("0.50"), same),
        PolicyAggregates(PolicyId.SAFE_SRC_TYPES, same, Decimal("0.20"), same),
    ])
    assert ranking.order == (PolicyId.SAFE_SRC_TYPES, PolicyId.BIN_TYPES, PolicyId.SRC_TYPES)
    assert "lower SD" in ranking.trace[0]
    assert "policy order (1 < 3)" in ranking.trace[1]


def test_ctr_orders_sizes_by_callsite():
    facts = chain_program()
    engine = PolicyEngine(facts)
    sets = [engine.evaluate(PolicyId.SUB_HIERARCHY, cs) for cs in reversed(list(facts.callsites.values()))]
    total, dist = ctr(sets)
    assert total == 4
    assert dist.values == (3, 1)


def test_return_targets_and_rtr():
    facts = _return_program()
    relation = return_relation(facts, PolicyId.SRC_TYPES)
    assert relation.counts() == {"g": 4, "h": 2, "k": 0}
    assert [group for members, group in relation.groups if "g" in members] == [("x", "y")]
    total, dist = rtr(facts, "src-types", relation=relation)
    assert total == 6
    assert dist.max == 4


def test_pure_declarations_are_not_return_sites():
    facts = ProgramFacts.build(
        [cls("A"), cls("B", "A")],
        [method("A", "f", pure=True), method("B", "f")],
        [table("A", 0, ["A"], [None]), table("B", 0, ["B", "A"], ["B::f"])],
        [vcall("cs0", "A", 0, name="f")],
    )
    assert return_relation(facts, PolicyId.SUB_HIERARCHY).return_sites == ("B::f",)


def test_gadget_counts():
    facts = _return_program()
    engine = PolicyEngine(facts)
    sets = [engine.evaluate(PolicyId.SRC_TYPES, cs) for cs in facts.callsites.values()]
    gadgets = GadgetAnnotations({"g": GadgetFlags(fwd=True), "k": GadgetFlags(ret=True)})
    assert fcga(sets, gadgets) == 2
    assert bcga(return_relation(facts, PolicyId.SRC_TYPES, engine), gadgets) == 4
    assert bcga(return_relation(facts, PolicyId.SRC_TYPES, engine), GadgetAnnotations()) == 0


def test_analyze_program_normalizes_against_virtual_functions():
    facts = multiple_inheritance_program()
    report = analyze_program(facts, [PolicyId.SUB_HIERARCHY, PolicyId.STRICT_SUB_HIERARCHY])
    assert report.census.islands == 1
    assert report.census.virtual_callsites == 2
    sub = report.result(PolicyId.SUB_HIERARCHY)
    assert (sub.ctr_total, sub.baseline_count) == (4, 2)
    assert sub.normalized.avg == Decimal("100.00")
    assert report.result(PolicyId.STRICT_SUB_HIERARCHY).normalized.avg == Decimal("50.00")
    assert report.ranking.order == (PolicyId.STRICT_SUB_HIERARCHY, PolicyId.SUB_HIERARCHY)


def test_analyze_program_counts_skipped_callsites():
    facts = ProgramFacts.build(
        [cls("A")], [method("A", "f")], [table("A", 0, ["A"], ["A::f"])],
        [vcall("named", "A", 0, name="f"), vcall("anonymous", "A", 0)],
    )
    result = analyze_program(facts, [PolicyId.STRICT_SRC_TYPES]).result(PolicyId.STRICT_SRC_TYPES)
    assert (result.evaluated, result.skipped) == (1, 1)


def test_zero_baseline_omits_normalized_values():
    facts = free_functions_program([fn("g")], [pcall("x")])
    report = analyze_program(facts, [PolicyId.ALL_VTABLES])
    result = report.result(PolicyId.ALL_VTABLES)
    assert result.evaluated == 0
    assert result.normalized is None
    assert report.ranking.order == ()


def test_explicit_baseline_overrides_policy_default():
    facts = multiple_inheritance_program()
    result = analyze_program(facts, [PolicyId.SUB_HIERARCHY], baseline=BASELINE_ALL_FUNCTIONS).result(PolicyId.SUB_HIERARCHY)
    assert result.baseline == BASELINE_ALL_FUNCTIONS


@settings(max_examples=10_000, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=500), min_size=1, max_size=60))
def test_p90_is_smallest_value_covering_ninety_percent(values):
    d = distribution(values)
    covered = sum(1 for v in values if v <= d.p90)
    assert 10 * covered >= 9 * len(values)
    smaller = [v for v in values if v < d.p90]
    if smaller:
        below = max(smaller)
        assert 10 * sum(1 for v in values if v <= below) < 9 * len(values)


@settings(max_examples=get_property_examples(), deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=500), min_size=1, max_size=60))
def test_sd_is_the_population_form(values):
    mean = Fraction(sum(values), len(values))
    variance = sum((Fraction(v) - mean) ** 2 for v in values) / len(values)
    assert abs(distribution(values).sd ** 2 - float(variance)) <= 1e-6 * max(1.0, float(variance))


if __name__ == "__main__":
    tests = [
        test_p90_of_one_to_ten,
        test_constant_sizes_have_no_spread,
        test_empty_distribution_is_zero,
        test_p90_index_small_counts,
        test_rounding_is_half_up_from_exact_values,
        test_zero_baseline,
        test_rank_reproduces_average_row_order,
        test_cross_program_means_rank_the_same,
        test_rank_ties_fall_back_to_sd_then_policy_number,
        test_ctr_orders_sizes_by_callsite,
        test_return_targets_and_rtr,
        test_pure_declarations_are_not_return_sites,
        test_gadget_counts,
        test_analyze_program_normalizes_against_virtual_functions,
        test_analyze_program_counts_skipped_callsites,
        test_zero_baseline_omits_normalized_values,
        test_explicit_baseline_overrides_policy_default,
        test_p90_is_smallest_value_covering_ninety_percent,
        test_sd_is_the_population_form,
    ]
    for test in tests:
        test()
        print(f"PASS {test.__name__}")
