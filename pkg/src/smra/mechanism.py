"""Simultaneous ascending-price auction engine.

All items are sold in parallel over discrete rounds. Prices are integers
counted in steps of one price increment; they start at zero, and nobody
holds anything. Each round, every bidder submits a conditional bid: a set
of items disjoint from her current provisional holdings, to be paid for at
current price plus one increment. Every item demanded by at least one
bidder has its price raised by one step and is handed to a provisional
owner drawn uniformly among the bidders who demanded it (the displaced
owner was forbidden from demanding it, so ownership always moves). The
auction ends on the first round in which nobody demands anything; the
provisional assignment and prices become final.

Determinism: all randomness flows through one seeded generator, and the
generator is consulted only when an item has two or more demanders -- a
sole demander wins outright without advancing the random stream. Items
are settled in ascending index order. Identical seeds therefore give
identical auctions, bit for bit, on every platform.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Callable, IO, Optional, Sequence

from .errors import Divergence, InvalidBid, TraceMismatch, UniverseMismatch
from .itemsets import items_of, mask_of, popcount_table
from .strategies import BidContext, Strategy
from .valuations import Valuation

# Masked-price lookup tables are built only for universes this small.
MASKSUM_LIMIT = 14


@dataclass(frozen=True)
class Draw:
    """One ownership draw: who contested an item and who won it."""

    item: int
    candidates: tuple[int, ...]
    chosen: int


@dataclass(frozen=True)
class RoundRecord:
    """Everything that happened in one round, masks in bitmask form."""

    t: int
    prices_before: tuple[int, ...]
    bids: tuple[int, ...]
    excess: int
    draws: tuple[Draw, ...]
    prices_after: tuple[int, ...]
    provisional: tuple[int, ...]


@dataclass(frozen=True)
class AuctionState:
    """Public auction state between rounds (pure-step API)."""

    round: int
    prices: tuple[int, ...]
    provisional: tuple[int, ...]
    history: tuple[RoundRecord, ...] = ()


@dataclass(frozen=True)
class AuctionOutcome:
    """Final (or, when diverged, partial) result of an auction run."""

    allocation: tuple[int, ...]
    prices: tuple[int, ...]
    rounds: int
    records: Optional[tuple[RoundRecord, ...]]
    diverged: bool = False


def init_auction(m: int, n: int) -> AuctionState:
    """Fresh state: all prices zero, nobody holds anything."""
    if m < 1:
        raise ValueError(f"need at least one item, got m={m}")
    if n < 1:
        raise ValueError(f"need at least one bidder, got n={n}")
    return AuctionState(round=0, prices=(0,) * m, provisional=(0,) * n)


def _validate_bids(bids: Sequence[int], provisional: Sequence[int], m: int) -> None:
    if len(bids) != len(provisional):
        raise ValueError(
            f"got {len(bids)} bids for {len(provisional)} bidders"
        )
    for i, bid in enumerate(bids):
        if bid < 0 or bid >> m:
            raise InvalidBid(i, bid, f"items outside universe of size {m}")
        if bid & provisional[i]:
            raise InvalidBid(
                i, bid,
                f"bid overlaps own provisional set {provisional[i]:#x}",
            )


def _settle_round(
    prices: list[int],
    provisional: list[int],
    owners: list[int],
    bids: Sequence[int],
    pick: Callable[[int, tuple[int, ...]], int],
) -> tuple[int, tuple[Draw, ...]]:
    """Apply one round of demanded-item price raises and ownership draws.

    Mutates prices, provisional and owners in place. `pick(item, cands)`
    chooses the winning bidder index from the non-empty candidate tuple.
    Returns (demanded mask, draws in ascending item order).
    """
    union = 0
    for bid in bids:
        union |= bid
    draws = []
    rest = union
    while rest:
        low = rest & -rest
        j = low.bit_length() - 1
        rest ^= low
        cands = tuple(i for i, bid in enumerate(bids) if (bid >> j) & 1)
        prices[j] += 1
        winner = pick(j, cands)
        old = owners[j]
        if old >= 0:
            provisional[old] ^= low
        owners[j] = winner
        provisional[winner] |= low
        draws.append(Draw(j, cands, winner))
    return union, tuple(draws)


def _rng_pick(rng: random.Random) -> Callable[[int, tuple[int, ...]], int]:
    def pick(_item: int, cands: tuple[int, ...]) -> int:
        if len(cands) == 1:
            return cands[0]
        return cands[rng.randrange(len(cands))]

    return pick


def run_round(
    state: AuctionState, bids: Sequence[int], rng: random.Random
) -> AuctionState:
    """One pure step: validate bids, settle, and return the next state.

    A round in which every bid is empty is terminal; it is still recorded
    (with no draws and no price change) so traces document termination.
    """
    m = len(state.prices)
    _validate_bids(bids, state.provisional, m)
    prices = list(state.prices)
    provisional = list(state.provisional)
    owners = [-1] * m
    for i, held in enumerate(provisional):
        for j in items_of(held):
            owners[j] = i

    bids = tuple(bids)
    if any(bids):
        excess, draws = _settle_round(prices, provisional, owners, bids, _rng_pick(rng))
    else:
        excess, draws = 0, ()
    record = RoundRecord(
        t=state.round,
        prices_before=state.prices,
        bids=bids,
        excess=excess,
        draws=draws,
        prices_after=tuple(prices),
        provisional=tuple(provisional),
    )
    return AuctionState(
        round=state.round + 1,
        prices=record.prices_after,
        provisional=record.provisional,
        history=state.history + (record,),
    )


def default_max_rounds(valuations: Sequence[Valuation]) -> int:
    """Generous round budget: enough for every price to climb past every
    value with slack, which bounds any surplus-respecting strategy mix."""
    m = valuations[0].universe_size
    top = max(v.max_value() for v in valuations)
    return len(valuations) * m * (top + 2)


def masked_price_sums(prices: Sequence[int], m: int) -> list[int]:
    """sums[mask] = total posted price of the bundle, for every mask."""
    sums = [0] * (1 << m)
    for mask in range(1, 1 << m):
        low = mask & -mask
        sums[mask] = sums[mask & (mask - 1)] + prices[low.bit_length() - 1]
    return sums


def run_auction(
    valuations: Sequence[Valuation],
    strategies: Sequence[Strategy],
    seed: int = 0,
    *,
    max_rounds: int | None = None,
    record_trace: bool = True,
    observer: Callable[[int, tuple[int, ...], list[int]], None] | None = None,
) -> AuctionOutcome:
    """Run a full auction to termination.

    Each round every strategy sees a BidContext (current prices, own
    holdings, full histories) and proposes a bid mask. The observer, if
    given, is called after every settled round with (t, prices_after,
    provisional_masks); the masks list is live and must not be mutated.

    Raises Divergence (carrying the partial outcome) if the auction is
    still live after max_rounds rounds.
    """
    n = len(valuations)
    if n == 0:
        raise ValueError("need at least one bidder")
    if len(strategies) != n:
        raise ValueError(f"{n} valuations but {len(strategies)} strategies")
    m = valuations[0].universe_size
    for v in valuations[1:]:
        if v.universe_size != m:
            raise UniverseMismatch(
                f"valuations disagree on universe size: {m} vs {v.universe_size}"
            )
    if max_rounds is None:
        max_rounds = default_max_rounds(valuations)

    use_tables = m <= MASKSUM_LIMIT
    value_tables = [v.value_table() if use_tables else None for v in valuations]
    popcounts = popcount_table(m) if use_tables else None

    prices = [0] * m
    owners = [-1] * m
    provisional = [0] * n
    price_history: list[tuple[int, ...]] = [(0,) * m]
    own_set_histories: list[list[int]] = [[0] for _ in range(n)]
    own_bid_histories: list[list[int]] = [[] for _ in range(n)]
    contexts = [
        BidContext(
            bidder=i,
            valuation=valuations[i],
            t=0,
            prices=price_history[0],
            price_history=price_history,
            own_set=0,
            own_set_history=own_set_histories[i],
            own_bid_history=own_bid_histories[i],
            m=m,
            value_table=value_tables[i],
            price_sums=None,
            popcounts=popcounts,
        )
        for i in range(n)
    ]
    proposers = [s.propose for s in strategies]
    rng = random.Random(seed)
    randrange = rng.randrange
    records: list[RoundRecord] | None = [] if record_trace else None
    bidders = range(n)

    t = 0
    while True:
        current_prices = price_history[-1]
        price_sums = masked_price_sums(prices, m) if use_tables else None
        for i in bidders:
            ctx = contexts[i]
            ctx.t = t
            ctx.prices = current_prices
            ctx.own_set = provisional[i]
            ctx.price_sums = price_sums
        bids = [proposers[i](contexts[i]) for i in bidders]

        union = 0
        for i in bidders:
            bid = bids[i]
            if bid:
                if bid < 0 or bid >> m:
                    raise InvalidBid(
                        i, bid, f"items outside universe of size {m}"
                    )
                if bid & provisional[i]:
                    raise InvalidBid(
                        i, bid,
                        f"bid overlaps own provisional set {provisional[i]:#x}",
                    )
                union |= bid

        if not union:
            if records is not None:
                records.append(
                    RoundRecord(
                        t=t,
                        prices_before=current_prices,
                        bids=tuple(bids),
                        excess=0,
                        draws=(),
                        prices_after=current_prices,
                        provisional=tuple(provisional),
                    )
                )
            return AuctionOutcome(
                allocation=tuple(provisional),
                prices=current_prices,
                rounds=t,
                records=tuple(records) if records is not None else None,
            )

        if t >= max_rounds:
            partial = AuctionOutcome(
                allocation=tuple(provisional),
                prices=current_prices,
                rounds=t,
                records=tuple(records) if records is not None else None,
                diverged=True,
            )
            raise Divergence(max_rounds, partial)

        # Same settlement as _settle_round, inlined; Draw objects are only
        # materialized when a trace is recorded. The equivalence of this
        # path with run_round is pinned by tests.
        draws: list[Draw] | None = [] if records is not None else None
        rest = union
        while rest:
            low = rest & -rest
            j = low.bit_length() - 1
            rest ^= low
            cands = [i for i, bid in enumerate(bids) if (bid >> j) & 1]
            prices[j] += 1
            winner = cands[0] if len(cands) == 1 else cands[randrange(len(cands))]
            old = owners[j]
            if old >= 0:
                provisional[old] ^= low
            owners[j] = winner
            provisional[winner] |= low
            if draws is not None:
                draws.append(Draw(j, tuple(cands), winner))

        new_prices = tuple(prices)
        price_history.append(new_prices)
        for i in bidders:
            own_set_histories[i].append(provisional[i])
            own_bid_histories[i].append(bids[i])
        if records is not None:
            records.append(
                RoundRecord(
                    t=t,
                    prices_before=current_prices,
                    bids=tuple(bids),
                    excess=union,
                    draws=tuple(draws),
                    prices_after=new_prices,
                    provisional=tuple(provisional),
                )
            )
        if observer is not None:
            observer(t, new_prices, provisional)
        t += 1


# ---------------------------------------------------------------------------
# Traces: JSONL serialization and verifying replay

_TRACE_KEYS = {
    "t", "prices_before", "bids", "excess", "draws", "prices_after",
    "provisional",
}


def _record_to_json(record: RoundRecord) -> dict:
    return {
        "t": record.t,
        "prices_before": list(record.prices_before),
        "bids": [list(items_of(b)) for b in record.bids],
        "excess": list(items_of(record.excess)),
        "draws": [
            {"item": d.item, "candidates": list(d.candidates), "chosen": d.chosen}
            for d in record.draws
        ],
        "prices_after": list(record.prices_after),
        "provisional": [list(items_of(s)) for s in record.provisional],
    }


def write_trace_jsonl(records: Sequence[RoundRecord], file: IO[str] | str) -> None:
    """One JSON object per line, one line per round."""
    if isinstance(file, str):
        with open(file, "w", encoding="utf-8") as handle:
            write_trace_jsonl(records, handle)
        return
    for record in records:
        file.write(json.dumps(_record_to_json(record), separators=(",", ":")))
        file.write("\n")


def read_trace_jsonl(file: IO[str] | str) -> list[RoundRecord]:
    """Parse a trace written by write_trace_jsonl back into records."""
    if isinstance(file, str):
        with open(file, "r", encoding="utf-8") as handle:
            return read_trace_jsonl(handle)
    records = []
    for line_no, line in enumerate(file):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceMismatch(f"trace line {line_no}: bad JSON ({exc})") from None
        if not isinstance(obj, dict) or not _TRACE_KEYS.issubset(obj):
            raise TraceMismatch(
                f"trace line {line_no}: missing keys "
                f"{sorted(_TRACE_KEYS - set(obj))}"
            )
        m = len(obj["prices_before"])
        records.append(
            RoundRecord(
                t=obj["t"],
                prices_before=tuple(obj["prices_before"]),
                bids=tuple(mask_of(b, m) for b in obj["bids"]),
                excess=mask_of(obj["excess"], m),
                draws=tuple(
                    Draw(d["item"], tuple(d["candidates"]), d["chosen"])
                    for d in obj["draws"]
                ),
                prices_after=tuple(obj["prices_after"]),
                provisional=tuple(mask_of(s, m) for s in obj["provisional"]),
            )
        )
    return records


@dataclass(frozen=True)
class ReplayResult:
    prices: tuple[int, ...]
    provisional: tuple[int, ...]
    rounds: int
    terminal: bool


def replay_trace(records: Sequence[RoundRecord]) -> ReplayResult:
    """Re-run a complete trace from the empty start, verifying every step.

    Checks round numbering, price bookkeeping, bid validity, the demanded
    set, candidate pools, and ownership evolution; any discrepancy raises
    TraceMismatch. Returns the final state and whether the trace ends with
    the terminal all-empty round.
    """
    if not records:
        raise TraceMismatch("empty trace")
    m = len(records[0].prices_before)
    n = len(records[0].bids)
    prices = [0] * m
    provisional = [0] * n
    owners = [-1] * m
    terminal = False
    rounds = 0
    for expect_t, record in enumerate(records):
        if terminal:
            raise TraceMismatch("rounds continue after the terminal round")
        if record.t != expect_t:
            raise TraceMismatch(f"round {expect_t}: labeled t={record.t}")
        if record.prices_before != tuple(prices):
            raise TraceMismatch(
                f"round {expect_t}: prices_before {record.prices_before} != "
                f"running prices {tuple(prices)}"
            )
        if len(record.bids) != n or len(record.prices_before) != m:
            raise TraceMismatch(f"round {expect_t}: bidder/item count changed")
        try:
            _validate_bids(record.bids, provisional, m)
        except InvalidBid as exc:
            raise TraceMismatch(f"round {expect_t}: {exc}") from None

        if not any(record.bids):
            terminal = True
            computed_excess: int = 0
            computed_draws: tuple[Draw, ...] = ()
        else:
            rounds += 1
            draw_iter = iter(record.draws)

            def pick(item: int, cands: tuple[int, ...]) -> int:
                try:
                    draw = next(draw_iter)
                except StopIteration:
                    raise TraceMismatch(
                        f"round {expect_t}: trace has too few draws"
                    ) from None
                if draw.item != item or draw.candidates != cands:
                    raise TraceMismatch(
                        f"round {expect_t}, item {item}: recorded draw "
                        f"{draw} does not match candidates {cands}"
                    )
                if draw.chosen not in cands:
                    raise TraceMismatch(
                        f"round {expect_t}, item {item}: chosen bidder "
                        f"{draw.chosen} never bid on it"
                    )
                return draw.chosen

            computed_excess, computed_draws = _settle_round(
                prices, provisional, owners, record.bids, pick
            )
        if computed_excess != record.excess:
            raise TraceMismatch(
                f"round {expect_t}: demanded set {record.excess:#x} != "
                f"recomputed {computed_excess:#x}"
            )
        if len(computed_draws) != len(record.draws):
            raise TraceMismatch(f"round {expect_t}: trace has too many draws")
        if record.prices_after != tuple(prices):
            raise TraceMismatch(
                f"round {expect_t}: prices_after {record.prices_after} != "
                f"recomputed {tuple(prices)}"
            )
        if record.provisional != tuple(provisional):
            raise TraceMismatch(
                f"round {expect_t}: provisional sets do not match replay"
            )
    return ReplayResult(
        prices=tuple(prices),
        provisional=tuple(provisional),
        rounds=rounds,
        terminal=terminal,
    )
