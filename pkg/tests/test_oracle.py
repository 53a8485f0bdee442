"""Welfare oracle and price-to-value rationality measurement."""

import random
from fractions import Fraction
from math import inf

import pytest

from helpers import naive_optimal
from smra import (
    AdditiveValuation,
    InvalidAllocation,
    OracleTooLarge,
    RationalityReport,
    ScriptedStrategy,
    TableValuation,
    TruthfulStrategy,
    UniverseMismatch,
    measure_rationality,
    optimal_welfare,
    run_auction,
    welfare,
    welfare_ratio,
)
from smra.mechanism import AuctionOutcome, RoundRecord
from smra.scenarios import (
    build_bad_pair,
    build_local_tight,
    build_nonsecure_punishment,
    build_scripted_partition,
    build_superadditive,
    build_truthful_tight,
)

CORPUS = [
    (build_bad_pair(10), 10),
    (build_superadditive(50), 100),
    (build_local_tight(1, 1, 2, 3, 1), 5),
    (build_truthful_tight(2, 2, 3), 3),
    (build_scripted_partition([{0}, {1, 2}]), 3),
    (build_nonsecure_punishment(), 11),
]


# ---------------------------------------------------------------------------
# Optimal welfare


@pytest.mark.parametrize("scenario,expected", CORPUS, ids=lambda c: getattr(c, "name", c))
def test_optimal_welfare_matches_exhaustive_search(scenario, expected):
    vals = scenario.valuations
    result = optimal_welfare(vals)
    assert result.welfare == expected == naive_optimal(vals)
    # the returned assignment is disjoint and actually achieves the optimum
    held = 0
    for mask in result.assignment:
        assert held & mask == 0
        held |= mask
    assert welfare(result.assignment, vals) == result.welfare


def test_optimal_welfare_on_random_tables():
    rng = random.Random(2024)
    for _ in range(15):
        m = rng.randint(1, 3)
        n = rng.randint(1, 3)
        vals = []
        for _ in range(n):
            table = [0] * (1 << m)
            for mask in range(1, 1 << m):
                floor = max(table[mask & ~(1 << j)] for j in range(m)
                            if mask >> j & 1)
                table[mask] = floor + rng.randint(0, 4)
            vals.append(TableValuation(table))
        assert optimal_welfare(vals).welfare == naive_optimal(vals)


def test_oracle_rejects_oversized_instances():
    with pytest.raises(OracleTooLarge):
        optimal_welfare((AdditiveValuation((1,) * 17),))
    # within the item bound but over the operations budget
    big = AdditiveValuation((1,) * 16)
    with pytest.raises(OracleTooLarge):
        optimal_welfare((big, big))


def test_optimal_welfare_validates_input():
    with pytest.raises(ValueError):
        optimal_welfare(())
    with pytest.raises(UniverseMismatch):
        optimal_welfare((AdditiveValuation((1,)), AdditiveValuation((1, 2))))


# ---------------------------------------------------------------------------
# Achieved welfare and ratios


def test_welfare_of_assignments():
    sc = build_bad_pair(10)
    vals = sc.valuations
    assert welfare((0, 0), vals) == 0
    assert welfare((0b01, 0b10), vals) == 2  # one item each: no pair bonus
    assert welfare((0b11, 0), vals) == 10
    with pytest.raises(InvalidAllocation):
        welfare((0b01, 0b01), vals)  # both claim the same item
    with pytest.raises(InvalidAllocation):
        welfare((0b01,), vals)


def test_welfare_ratio_forms():
    assert welfare_ratio(2, 10) == Fraction(1, 5)
    assert welfare_ratio(7, 7) == Fraction(1)
    assert welfare_ratio(0, 0) == Fraction(1)  # nothing to gain, nothing lost
    sc = build_bad_pair(10)
    outcome = run_auction(sc.valuations, sc.strategies, seed=0)
    opt = optimal_welfare(sc.valuations)
    ratio = welfare_ratio(outcome, opt, sc.valuations)
    assert ratio == Fraction(welfare(outcome.allocation, sc.valuations), 10)
    with pytest.raises(ValueError):
        welfare_ratio(outcome, opt)  # outcome form needs the valuations


# ---------------------------------------------------------------------------
# Rationality measurement


def _fabricated_outcome():
    # one bidder ends up holding all three items at prices (3, 3, 0);
    # the {0,1} pair is priced at 6 but worth only 4
    record = RoundRecord(
        t=0,
        prices_before=(0, 0, 0),
        bids=(0b111,),
        excess=0b111,
        draws=(),
        prices_after=(3, 3, 0),
        provisional=(0b111,),
    )
    valuation = TableValuation((0, 3, 3, 4, 0, 3, 3, 20))
    outcome = AuctionOutcome(
        allocation=(0b111,), prices=(3, 3, 0), rounds=1, records=(record,)
    )
    return outcome, (valuation,)


def test_rationality_scans_all_subsets_within_the_cap():
    outcome, vals = _fabricated_outcome()
    report = measure_rationality(outcome, vals)
    assert report.lam == Fraction(3, 2)
    assert report.witness == (0, 0, (0, 1))
    # the full bundle is cheap relative to its value
    assert report.lam_full == Fraction(6, 20)
    assert report.witness_full == (0, 0, (0, 1, 2))


def test_rationality_subset_cap_falls_back_to_full_and_singletons():
    outcome, vals = _fabricated_outcome()
    report = measure_rationality(outcome, vals, subset_cap=2)
    assert report.lam == Fraction(1)  # the bad pair is no longer examined
    assert report.lam_full == Fraction(6, 20)


def test_rationality_is_infinite_on_worthless_wins():
    vals = (TableValuation((0, 0)),)
    strategies = (ScriptedStrategy((0b1,)),)
    outcome = run_auction(vals, strategies, seed=0)
    assert outcome.allocation == (0b1,)
    report = measure_rationality(outcome, vals)
    assert report.lam == inf
    assert report.lam_full == inf
    assert report.to_dict()["lambda"] == "inf"


def test_rationality_of_a_symmetric_truthful_run():
    sc = build_truthful_tight(4, 3, 60)
    outcome = run_auction(sc.valuations, sc.strategies, seed=11)
    assert outcome.prices == (2, 2, 2, 2)
    report = measure_rationality(outcome, sc.valuations)
    assert report.lam == Fraction(2)
    assert report.lam_full == Fraction(2)
    assert report.lam <= 3  # never beyond the near-submodularity factor


def test_rationality_of_secure_runs_never_exceeds_one():
    sc = build_superadditive(50)
    for seed in range(5):
        outcome = run_auction(sc.valuations, sc.strategies, seed=seed)
        report = measure_rationality(outcome, sc.valuations)
        assert report.lam <= 1


def test_rationality_trivial_when_nothing_is_ever_held():
    vals = (TableValuation((0, 0)),)
    outcome = run_auction(vals, (TruthfulStrategy(),))
    report = measure_rationality(outcome, vals)
    assert report.lam == Fraction(1)
    assert report.witness is None
    assert report.to_dict() == {
        "lambda": "1",
        "lambda_full": "1",
        "witness": None,
        "witness_full": None,
    }


def test_rationality_requires_a_trace():
    sc = build_bad_pair(10)
    outcome = run_auction(
        sc.valuations, sc.strategies, seed=0, record_trace=False
    )
    with pytest.raises(ValueError):
        measure_rationality(outcome, sc.valuations)


def test_rationality_report_dict_encoding():
    report = RationalityReport(
        lam=Fraction(3, 2),
        lam_full=Fraction(1),
        witness=(4, 1, (0, 2)),
        witness_full=None,
    )
    assert report.to_dict() == {
        "lambda": "3/2",
        "lambda_full": "1",
        "witness": {"round": 4, "bidder": 1, "items": [0, 2]},
        "witness_full": None,
    }
