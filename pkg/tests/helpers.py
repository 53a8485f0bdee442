"""Shared test helpers: independent brute-force oracles and context builders.

The oracles here are deliberately naive re-implementations (triple
enumeration, full assignment enumeration) so the package's optimized
algorithms are checked against code with no shared logic.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from math import inf
from typing import Optional, Sequence

from smra import BidContext, Valuation, masked_price_sums
from smra.itemsets import popcount_table


def naive_degree(valuation: Valuation):
    """Minimum marginal ratio by direct enumeration of every
    (item x, A strict subset of B, x outside B) triple."""
    m = valuation.universe_size
    table = valuation.value_table()
    best = None
    for x in range(m):
        xbit = 1 << x
        for b in range(1 << m):
            if b & xbit or b == 0:  # the empty set has no strict subset
                continue
            den = table[b | xbit] - table[b]
            if den <= 0:
                continue
            a = b
            while True:
                a = (a - 1) & b
                num = table[a | xbit] - table[a]
                ratio = Fraction(num, den)
                if best is None or ratio < best:
                    best = ratio
                if a == 0:
                    break
    return inf if best is None else best


def naive_optimal(valuations: Sequence[Valuation]) -> int:
    """Best welfare over all (n+1)^m assignments of items to a bidder or
    to nobody."""
    n = len(valuations)
    m = valuations[0].universe_size
    best = 0
    for owners in itertools.product(range(n + 1), repeat=m):
        bundles = [0] * n
        for item, owner in enumerate(owners):
            if owner:
                bundles[owner - 1] |= 1 << item
        total = sum(v.value(s) for v, s in zip(valuations, bundles))
        if total > best:
            best = total
    return best


def make_ctx(
    valuation: Valuation,
    prices: Sequence[int],
    own: int = 0,
    t: int = 0,
    prev_bid: Optional[int] = None,
    bidder: int = 0,
    tables: bool = True,
) -> BidContext:
    """A self-consistent BidContext for strategy-level tests.

    Histories are padded with the current prices/holdings; prev_bid
    seeds the bid history (t entries). tables=False exercises the
    table-free evaluation paths.
    """
    m = valuation.universe_size
    prices = tuple(prices)
    price_history = [prices] * (t + 1)
    own_set_history = [own] * (t + 1)
    own_bid_history = [prev_bid if prev_bid is not None else 0] * t
    return BidContext(
        bidder=bidder,
        valuation=valuation,
        t=t,
        prices=prices,
        price_history=price_history,
        own_set=own,
        own_set_history=own_set_history,
        own_bid_history=own_bid_history,
        m=m,
        value_table=valuation.value_table() if tables else None,
        price_sums=masked_price_sums(prices, m) if tables else None,
        popcounts=popcount_table(m) if tables else None,
    )
