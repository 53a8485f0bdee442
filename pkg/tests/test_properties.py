"""Property-based invariants: engine rules, analysis oracles, path equality."""

from fractions import Fraction

from hypothesis import given, settings, strategies as st

from helpers import make_ctx, naive_degree
from smra import (
    AdditiveValuation,
    InsecureProvisionalState,
    ScriptedStrategy,
    SecureProfitMaxStrategy,
    TableValuation,
    degree_of_submodularity,
    is_alpha_near_submodular,
    is_locally_optimal,
    is_secure,
    locally_optimal_bid,
    measure_rationality,
    profit_max_secure_bid,
    random_near_submodular,
    replay_trace,
    run_auction,
    truthful_bid,
)


@st.composite
def monotone_tables(draw, max_m=4, max_step=4):
    m = draw(st.integers(1, max_m))
    size = 1 << m
    deltas = draw(
        st.lists(st.integers(0, max_step), min_size=size, max_size=size)
    )
    table = [0] * size
    for mask in range(1, size):
        floor = max(
            table[mask & ~(1 << j)] for j in range(m) if (mask >> j) & 1
        )
        table[mask] = floor + deltas[mask]
    return TableValuation(tuple(table))


# ---------------------------------------------------------------------------
# Degree of submodularity


@settings(max_examples=60, deadline=None)
@given(monotone_tables())
def test_degree_matches_the_naive_oracle(valuation):
    report = degree_of_submodularity(valuation)
    assert report.degree == naive_degree(valuation)


@settings(max_examples=60, deadline=None)
@given(monotone_tables())
def test_degree_witness_reproduces_the_ratio(valuation):
    report = degree_of_submodularity(valuation)
    if report.witness is None:
        assert report.degree == float("inf")
        return
    x, small, large = report.witness
    bit = 1 << x
    assert small & large == small and small != large  # strictly nested
    assert large & bit == 0
    num = valuation.value(small | bit) - valuation.value(small)
    den = valuation.value(large | bit) - valuation.value(large)
    assert den > 0
    assert Fraction(num, den) == report.degree


@settings(max_examples=30, deadline=None)
@given(
    m=st.integers(1, 6),
    alpha=st.sampled_from([1, 2, 3]),
    value_cap=st.integers(10, 40),
    seed=st.integers(0, 2**32 - 1),
)
def test_generator_output_is_certified_and_deterministic(m, alpha, value_cap, seed):
    v1 = random_near_submodular(m, alpha, value_cap, seed)
    v2 = random_near_submodular(m, alpha, value_cap, seed)
    assert v1.value_table() == v2.value_table()
    assert is_alpha_near_submodular(v1, alpha)
    assert 0 < v1.max_value() <= value_cap


# ---------------------------------------------------------------------------
# Engine invariants under arbitrary scripted play


@st.composite
def scripted_auctions(draw):
    m = draw(st.integers(1, 4))
    n = draw(st.integers(1, 3))
    rounds = draw(st.integers(1, 4))
    top = (1 << m) - 1
    scripts = tuple(
        tuple(draw(st.integers(0, top)) for _ in range(rounds))
        for _ in range(n)
    )
    seed = draw(st.integers(0, 2**32 - 1))
    return m, scripts, seed


@settings(max_examples=40, deadline=None)
@given(scripted_auctions())
def test_engine_invariants_hold_for_any_scripts(instance):
    m, scripts, seed = instance
    valuations = tuple(AdditiveValuation((1,) * m) for _ in scripts)
    strategies = tuple(ScriptedStrategy(s) for s in scripts)
    outcome = run_auction(valuations, strategies, seed=seed)

    prev_provisional = (0,) * len(scripts)
    for record in outcome.records:
        union = 0
        for i, bid in enumerate(record.bids):
            assert bid & prev_provisional[i] == 0  # never re-bid held items
            union |= bid
        assert record.excess == union
        # every demanded item's price rose by exactly one, others unchanged
        for j in range(m):
            step = record.prices_after[j] - record.prices_before[j]
            assert step == (union >> j) & 1
        # one draw per demanded item, in ascending item order
        assert [d.item for d in record.draws] == sorted(
            j for j in range(m) if (union >> j) & 1
        )
        for draw_ in record.draws:
            assert draw_.chosen in draw_.candidates
            assert (record.bids[draw_.chosen] >> draw_.item) & 1
        held = 0
        for mask in record.provisional:
            assert held & mask == 0
            held |= mask
        # positive price exactly on the items somebody holds
        for j in range(m):
            assert (record.prices_after[j] > 0) == bool((held >> j) & 1)
        prev_provisional = record.provisional

    # the trace ends with the all-empty terminal round
    assert outcome.records[-1].bids == (0,) * len(scripts)
    assert outcome.rounds == len(outcome.records) - 1
    assert not outcome.diverged

    # a verifying replay reaches the same end state
    result = replay_trace(outcome.records)
    assert result.terminal
    assert result.prices == outcome.prices
    assert result.provisional == outcome.allocation


# ---------------------------------------------------------------------------
# Strategy-level properties


@st.composite
def bid_contexts(draw):
    valuation = draw(monotone_tables(max_m=3, max_step=3))
    m = valuation.universe_size
    prices = tuple(draw(st.integers(0, 5)) for _ in range(m))
    own = draw(st.integers(0, (1 << m) - 1))
    prev = draw(st.integers(0, (1 << m) - 1)) & ~own
    return valuation, prices, own, prev


@settings(max_examples=60, deadline=None)
@given(bid_contexts())
def test_truthful_bids_are_always_locally_optimal(case):
    valuation, prices, own, prev = case
    ctx = make_ctx(valuation, prices, own=own, t=1, prev_bid=prev)
    assert is_locally_optimal(ctx, truthful_bid(ctx))


@settings(max_examples=60, deadline=None)
@given(bid_contexts(), st.sampled_from(["incremented", "posted"]))
def test_table_and_generic_paths_always_agree(case, variant):
    valuation, prices, own, prev = case
    fast = make_ctx(valuation, prices, own=own, t=1, prev_bid=prev)
    slow = make_ctx(
        valuation, prices, own=own, t=1, prev_bid=prev, tables=False
    )
    assert truthful_bid(fast) == truthful_bid(slow)
    for start in ("previous", "empty"):
        assert locally_optimal_bid(fast, start) == locally_optimal_bid(slow, start)
    probe = prev if prev else ((1 << valuation.universe_size) - 1) & ~own
    assert is_secure(fast, probe, variant) == is_secure(slow, probe, variant)
    try:
        fast_bid = profit_max_secure_bid(fast, variant)
        fast_raise = None
    except InsecureProvisionalState as exc:
        fast_bid, fast_raise = None, exc.witness_mask
    try:
        slow_bid = profit_max_secure_bid(slow, variant)
        slow_raise = None
    except InsecureProvisionalState as exc:
        slow_bid, slow_raise = None, exc.witness_mask
    assert fast_bid == slow_bid
    assert fast_raise == slow_raise


# ---------------------------------------------------------------------------
# Security end to end: all-secure auctions never overpay, never trip


@settings(max_examples=25, deadline=None)
@given(
    m=st.integers(1, 5),
    n=st.integers(1, 3),
    alpha=st.sampled_from([1, 2, 3]),
    gen_seed=st.integers(0, 2**16),
    run_seed=st.integers(0, 2**32 - 1),
)
def test_all_secure_runs_stay_within_value(m, n, alpha, gen_seed, run_seed):
    valuations = tuple(
        random_near_submodular(m, alpha, 30, gen_seed + i) for i in range(n)
    )
    strategies = tuple(SecureProfitMaxStrategy() for _ in range(n))
    # never raises InsecureProvisionalState: held prices cannot rise
    outcome = run_auction(valuations, strategies, seed=run_seed)
    report = measure_rationality(outcome, valuations)
    assert report.lam <= 1
    for i, held in enumerate(outcome.allocation):
        paid = sum(
            outcome.prices[j] for j in range(m) if (held >> j) & 1
        )
        assert valuations[i].value(held) >= paid
