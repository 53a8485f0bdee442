"""Bidding strategies: per-round maps from observations to conditional bids.

Every round each bidder sees a BidContext -- current prices, her own
provisional holdings, and the full public history -- and proposes a bid: a
set of items disjoint from her holdings, to be paid at current price plus
one increment each. The rules here differ in how much they reason about
the risk of winning (the exposure problem):

  truthful            maximize conditional surplus outright,
  locally_optimal     hill-climb from the previous bid by single
                      add/delete/swap moves,
  secure_profit_max   maximize surplus among bids that can never leave the
                      bidder paying more than her value, whatever subset
                      she ends up winning,
  scripted            replay a fixed list of bids (for worked examples).

Custom rules plug in through the same Strategy interface.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

from .errors import InsecureProvisionalState
from .itemsets import (
    full_mask,
    items_of,
    iter_items,
    mask_of,
    mask_size,
    popcount_table,
    submasks,
)
from .valuations import Valuation

SECURE_VARIANTS = ("incremented", "posted")
LOCAL_STARTS = ("previous", "empty")


@lru_cache(maxsize=None)
def _popcounts(m: int) -> tuple[int, ...]:
    return tuple(popcount_table(m))


@dataclass(slots=True)
class BidContext:
    """What one bidder observes when asked for a bid.

    price_history[t] is the price vector entering round t; own_set_history
    and own_bid_history are this bidder's holdings entering each round and
    the bids she made. value_table, price_sums and popcounts are optional
    mask-indexed lookup tables (worth of every bundle; posted price of
    every bundle; bundle sizes) that the runner provides on small
    universes; strategies fall back to direct evaluation without them. The history sequences are live views
    shared with the runner and must not be mutated.
    """

    bidder: int
    valuation: Valuation
    t: int
    prices: tuple[int, ...]
    price_history: Sequence[tuple[int, ...]]
    own_set: int
    own_set_history: Sequence[int]
    own_bid_history: Sequence[int]
    m: int
    value_table: Optional[Sequence[int]] = None
    price_sums: Optional[Sequence[int]] = None
    popcounts: Optional[Sequence[int]] = None

    def value(self, mask: int) -> int:
        table = self.value_table
        if table is not None:
            return table[mask]
        return self.valuation.value(mask)

    def posted_price(self, mask: int) -> int:
        sums = self.price_sums
        if sums is not None:
            return sums[mask]
        prices = self.prices
        return sum(prices[j] for j in iter_items(mask))

    def incremented_price(self, mask: int) -> int:
        """What winning the whole bid would cost: posted + 1 per item."""
        return self.posted_price(mask) + mask_size(mask)

    def surplus(self, bid: int) -> int:
        """Conditional surplus of a bid on top of current holdings."""
        return (
            self.value(self.own_set | bid)
            - self.incremented_price(bid)
            - self.value(self.own_set)
        )


# ---------------------------------------------------------------------------
# Truthful bidding


def truthful_bid(ctx: BidContext) -> int:
    """Surplus-maximizing bid, ignoring exposure risk.

    Maximizes v(own + T) - incremented price of T over all bids T. Ties
    break toward fewer items, then the smallest bitmask, so at zero
    marginal surplus the bidder drops out (the empty bid wins its ties).
    """
    own = ctx.own_set
    comp = full_mask(ctx.m) & ~own
    table = ctx.value_table
    sums = ctx.price_sums
    if table is not None and sums is not None:
        pc = ctx.popcounts or _popcounts(ctx.m)
        best_u = table[own]
        best_card = 0
        best_mask = 0
        sub = comp
        while sub:
            u = table[own | sub] - sums[sub] - pc[sub]
            if u > best_u:
                best_u, best_card, best_mask = u, pc[sub], sub
            elif u == best_u:
                card = pc[sub]
                if card < best_card or (card == best_card and sub < best_mask):
                    best_card, best_mask = card, sub
            sub = (sub - 1) & comp
        return best_mask

    valuation = ctx.valuation
    prices = ctx.prices
    best_u = valuation.value(own)
    best_card = 0
    best_mask = 0
    for sub in submasks(comp):
        if not sub:
            continue
        cost = sum(prices[j] + 1 for j in iter_items(sub))
        u = valuation.value(own | sub) - cost
        card = mask_size(sub)
        if u > best_u or (
            u == best_u and (card < best_card or (card == best_card and sub < best_mask))
        ):
            best_u, best_card, best_mask = u, card, sub
    return best_mask


# ---------------------------------------------------------------------------
# Local search


def _climb(ctx: BidContext, start: int, comp: int, own: int) -> tuple[int, int]:
    """Best-improvement hill climb over single add/delete/swap moves.

    Returns (bid, its conditional value v(own+bid) - cost(bid)). Move ties
    break delete < add < swap, then by item index (by (out, in) for swaps),
    so the climb is deterministic.
    """
    table = ctx.value_table
    sums = ctx.price_sums
    if table is not None and sums is not None:
        pc = ctx.popcounts or _popcounts(ctx.m)

        def util(mask: int) -> int:
            return table[own | mask] - sums[mask] - pc[mask]

    else:
        valuation = ctx.valuation
        prices = ctx.prices

        def util(mask: int) -> int:
            cost = sum(prices[j] + 1 for j in iter_items(mask))
            return valuation.value(own | mask) - cost

    current = start
    u = util(current)
    while True:
        best_gain = 0
        best_rank: tuple | None = None
        best_mask = current
        for j in iter_items(current):  # deletes
            cand = current ^ (1 << j)
            gain = util(cand) - u
            if gain > best_gain or (gain == best_gain and best_rank is not None
                                    and (0, j) < best_rank):
                best_gain, best_rank, best_mask = gain, (0, j), cand
        outside = comp & ~current
        for j in iter_items(outside):  # adds
            cand = current | (1 << j)
            gain = util(cand) - u
            if gain > best_gain or (gain == best_gain and best_rank is not None
                                    and (1, j) < best_rank):
                best_gain, best_rank, best_mask = gain, (1, j), cand
        for out in iter_items(current):  # swaps
            base = current ^ (1 << out)
            for inn in iter_items(outside):
                cand = base | (1 << inn)
                gain = util(cand) - u
                if gain > best_gain or (gain == best_gain and best_rank is not None
                                        and (2, out, inn) < best_rank):
                    best_gain, best_rank, best_mask = gain, (2, out, inn), cand
        if best_rank is None or best_gain <= 0:
            return current, u
        current = best_mask
        u += best_gain


def locally_optimal_bid(ctx: BidContext, start: str = "previous") -> int:
    """Hill-climbing bid: refine the previous bid by single-item moves.

    Starts from last round's bid minus anything won since (or from the
    empty bid, per `start`), and repeatedly applies the best strictly
    improving add/delete/swap. If the climb settles on a bid whose
    conditional surplus is not strictly positive, the climb is redone from
    the empty bid, so the returned bid is either empty or strictly
    profitable; either way no single-item move can improve it.
    """
    if start not in LOCAL_STARTS:
        raise ValueError(f"start must be one of {LOCAL_STARTS}, got {start!r}")
    own = ctx.own_set
    comp = full_mask(ctx.m) & ~own
    if start == "previous" and ctx.own_bid_history:
        first = ctx.own_bid_history[-1] & comp
    else:
        first = 0
    bid, u = _climb(ctx, first, comp, own)
    if bid and u <= ctx.value(own):
        bid, _ = _climb(ctx, 0, comp, own)
    return bid


def is_locally_optimal(ctx: BidContext, bid: int) -> bool:
    """Whether no single add, delete, or swap strictly improves the bid."""
    own = ctx.own_set
    comp = full_mask(ctx.m) & ~own
    if bid & ~comp:
        return False
    u = ctx.surplus(bid)
    for j in iter_items(bid):
        if ctx.surplus(bid ^ (1 << j)) > u:
            return False
    outside = comp & ~bid
    for j in iter_items(outside):
        if ctx.surplus(bid | (1 << j)) > u:
            return False
    for out in iter_items(bid):
        base = bid ^ (1 << out)
        for inn in iter_items(outside):
            if ctx.surplus(base | (1 << inn)) > u:
                return False
    return True


# ---------------------------------------------------------------------------
# Secure bidding


def is_secure(ctx: BidContext, bid: int, variant: str = "incremented") -> bool:
    """Whether the bid can never leave the bidder overpaying.

    A bid T is secure if every subset of holdings-plus-bid is worth at
    least its personalized price: held items count at the posted price,
    newly bid items at posted price plus one increment (the price the
    bidder has offered to pay). The "posted" variant drops the increment.
    """
    if variant not in SECURE_VARIANTS:
        raise ValueError(f"variant must be one of {SECURE_VARIANTS}, got {variant!r}")
    increment = variant == "incremented"
    own = ctx.own_set
    reach = own | bid
    table = ctx.value_table
    sums = ctx.price_sums
    if table is not None and sums is not None:
        pc = ctx.popcounts or _popcounts(ctx.m)
        for sub in submasks(reach):
            personalized = sums[sub] + (pc[sub & ~own] if increment else 0)
            if table[sub] < personalized:
                return False
        return True
    valuation = ctx.valuation
    prices = ctx.prices
    for sub in submasks(reach):
        personalized = sum(prices[j] for j in iter_items(sub))
        if increment:
            personalized += mask_size(sub & ~own)
        if valuation.value(sub) < personalized:
            return False
    return True


def profit_max_secure_bid(ctx: BidContext, variant: str = "incremented") -> int:
    """Most profitable secure bid.

    Maximizes conditional surplus over secure bids only. Ties break toward
    bidding rather than quitting (a nonempty secure bid beats the empty bid
    at equal surplus), then toward fewer items, then the smallest bitmask.
    Raises InsecureProvisionalState when even the empty bid is insecure,
    i.e. the holdings already contain a subset priced above its worth.
    """
    if variant not in SECURE_VARIANTS:
        raise ValueError(f"variant must be one of {SECURE_VARIANTS}, got {variant!r}")
    own = ctx.own_set
    m = ctx.m
    comp = full_mask(m) & ~own
    table = ctx.value_table
    sums = ctx.price_sums

    if table is not None and sums is not None:
        increment = variant == "incremented"
        pc = ctx.popcounts or _popcounts(m)
        size = 1 << m
        # contaminated[X]: some subset of X is priced above its worth, so
        # no bid whose reach includes X can be secure.
        contaminated = bytearray(size)
        for x in range(size):
            personalized = sums[x] + (pc[x & ~own] if increment else 0)
            if table[x] < personalized:
                contaminated[x] = 1
                continue
            rest = x
            while rest:
                low = rest & -rest
                rest ^= low
                if contaminated[x ^ low]:
                    contaminated[x] = 1
                    break
        if contaminated[own]:
            witness = next(
                sub for sub in submasks(own)
                if table[sub] < sums[sub]
            )
            raise InsecureProvisionalState(ctx.bidder, witness)
        best_u = table[own]
        best_mask = 0
        best_card = 0
        sub = comp
        while sub:
            if not contaminated[own | sub]:
                u = table[own | sub] - sums[sub] - pc[sub]
                if u > best_u:
                    best_u, best_card, best_mask = u, pc[sub], sub
                elif u == best_u:
                    card = pc[sub]
                    if best_mask == 0 or card < best_card or (
                        card == best_card and sub < best_mask
                    ):
                        best_card, best_mask = card, sub
            sub = (sub - 1) & comp
        return best_mask

    if not is_secure(ctx, 0, variant):
        witness = next(
            sub for sub in submasks(own)
            if ctx.valuation.value(sub) < ctx.posted_price(sub)
        )
        raise InsecureProvisionalState(ctx.bidder, witness)
    best_u = ctx.value(own)
    best_mask = 0
    best_card = 0
    for sub in submasks(comp):
        if not sub or not is_secure(ctx, sub, variant):
            continue
        u = ctx.value(own | sub) - ctx.incremented_price(sub)
        card = mask_size(sub)
        if u > best_u:
            best_u, best_card, best_mask = u, card, sub
        elif u == best_u:
            if best_mask == 0 or card < best_card or (
                card == best_card and sub < best_mask
            ):
                best_card, best_mask = card, sub
    return best_mask


# ---------------------------------------------------------------------------
# Scripted bidding


def scripted_bid(ctx: BidContext, script: Sequence[int]) -> int:
    """Round t plays script[t] (empty once the script runs out), minus any
    items already held so the bid stays valid."""
    raw = script[ctx.t] if ctx.t < len(script) else 0
    return raw & full_mask(ctx.m) & ~ctx.own_set


# ---------------------------------------------------------------------------
# Strategy objects


class Strategy(ABC):
    """A bidding rule. propose() must return a mask disjoint from the
    bidder's provisional holdings."""

    kind: str = "abstract"

    @abstractmethod
    def propose(self, ctx: BidContext) -> int:
        """The bid for this round."""

    def spec_dict(self) -> dict:
        """JSON-ready description; inverse of strategy_from_spec."""
        return {"kind": self.kind}


@dataclass(frozen=True)
class TruthfulStrategy(Strategy):
    kind = "truthful"

    def propose(self, ctx: BidContext) -> int:
        return truthful_bid(ctx)


@dataclass(frozen=True)
class LocallyOptimalStrategy(Strategy):
    start: str = "previous"
    kind = "locally_optimal"

    def __post_init__(self):
        if self.start not in LOCAL_STARTS:
            raise ValueError(
                f"start must be one of {LOCAL_STARTS}, got {self.start!r}"
            )

    def propose(self, ctx: BidContext) -> int:
        return locally_optimal_bid(ctx, self.start)

    def spec_dict(self) -> dict:
        return {"kind": self.kind, "local_start": self.start}


@dataclass(frozen=True)
class SecureProfitMaxStrategy(Strategy):
    variant: str = "incremented"
    kind = "secure_profit_max"

    def __post_init__(self):
        if self.variant not in SECURE_VARIANTS:
            raise ValueError(
                f"variant must be one of {SECURE_VARIANTS}, got {self.variant!r}"
            )

    def propose(self, ctx: BidContext) -> int:
        return profit_max_secure_bid(ctx, self.variant)

    def spec_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.variant != "incremented":
            d["secure_variant"] = self.variant
        return d


@dataclass(frozen=True)
class ScriptedStrategy(Strategy):
    script: tuple[int, ...]
    kind = "scripted"

    def __post_init__(self):
        object.__setattr__(self, "script", tuple(self.script))

    def propose(self, ctx: BidContext) -> int:
        return scripted_bid(ctx, self.script)

    def spec_dict(self) -> dict:
        return {
            "kind": self.kind,
            "script": [list(items_of(mask)) for mask in self.script],
        }


@dataclass(frozen=True)
class CallableStrategy(Strategy):
    """Adapter for ad-hoc rules: any callable BidContext -> mask."""

    fn: Callable[[BidContext], int]
    kind = "custom"

    def propose(self, ctx: BidContext) -> int:
        return self.fn(ctx)

    def spec_dict(self) -> dict:
        raise ValueError("custom strategies have no JSON form")


def strategy_from_spec(spec: dict, m: int) -> Strategy:
    """Build a strategy from its JSON description (inverse of spec_dict)."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError(f"strategy spec must be a dict with a 'kind': {spec!r}")
    kind = spec["kind"]
    if kind == "truthful":
        return TruthfulStrategy()
    if kind == "locally_optimal":
        return LocallyOptimalStrategy(spec.get("local_start", "previous"))
    if kind == "secure_profit_max":
        return SecureProfitMaxStrategy(spec.get("secure_variant", "incremented"))
    if kind == "scripted":
        if "script" not in spec:
            raise ValueError("scripted strategy needs a 'script' list")
        script = tuple(mask_of(step, m) for step in spec["script"])
        return ScriptedStrategy(script)
    raise ValueError(f"unknown strategy kind {kind!r}")
