"""Named auction scenarios and the Monte Carlo trial harness.

A Scenario bundles a universe size, per-bidder (valuation, strategy)
pairs, and optional named per-trial events (predicates evaluated on each
outcome, surfaced as CSV flag columns and summary frequencies). Builders
construct the classic instability instances: the exposure coin-flip, the
price-war crowds that pin the welfare bounds, the superadditive bidder
frozen out by security, one-shot scripted partitions, and the overbidding
punishment example.

run_trials executes many independent auctions with per-trial seeds derived
deterministically from (master seed, trial index), so serial and parallel
execution produce identical rows.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from math import inf
from typing import Callable, IO, Optional, Sequence, Union

from .errors import Divergence, InvalidPartition, UniverseMismatch
from .itemsets import full_mask, items_of, mask_of, mask_size
from .mechanism import run_auction, write_trace_jsonl
from .oracle import measure_rationality, optimal_welfare, welfare
from .strategies import (
    LocallyOptimalStrategy,
    ScriptedStrategy,
    SecureProfitMaxStrategy,
    Strategy,
    TruthfulStrategy,
    strategy_from_spec,
)
from .valuations import (
    AdditiveValuation,
    PairBonusValuation,
    SymmetricStepValuation,
    TableValuation,
    TargetPairValuation,
    UnitDemandValuation,
    Valuation,
    valuation_from_spec,
)


@dataclass(frozen=True)
class BidderSpec:
    valuation: Valuation
    strategy: Strategy


@dataclass(frozen=True)
class TrialEvent:
    """Named per-trial predicate: check(outcome, welfare_value) -> bool."""

    name: str
    check: Callable[..., bool]


@dataclass(frozen=True)
class Scenario:
    name: str
    m: int
    bidders: tuple[BidderSpec, ...]
    epsilon_label: str = "1"
    events: tuple[TrialEvent, ...] = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "bidders", tuple(self.bidders))
        object.__setattr__(self, "events", tuple(self.events))
        if not self.bidders:
            raise ValueError("a scenario needs at least one bidder")
        for i, b in enumerate(self.bidders):
            if b.valuation.universe_size != self.m:
                raise UniverseMismatch(
                    f"bidder {i} has universe size {b.valuation.universe_size}, "
                    f"scenario has m={self.m}"
                )

    @property
    def valuations(self) -> tuple[Valuation, ...]:
        return tuple(b.valuation for b in self.bidders)

    @property
    def strategies(self) -> tuple[Strategy, ...]:
        return tuple(b.strategy for b in self.bidders)

    def spec_dict(self) -> dict:
        return {
            "name": self.name,
            "m": self.m,
            "epsilon_label": self.epsilon_label,
            "bidders": [
                {
                    "valuation": b.valuation.spec_dict(),
                    "strategy": b.strategy.spec_dict(),
                }
                for b in self.bidders
            ],
        }

    def with_strategy_options(
        self,
        local_start: Optional[str] = None,
        secure_variant: Optional[str] = None,
    ) -> "Scenario":
        """Copy of the scenario with options applied to matching strategies."""
        if local_start is None and secure_variant is None:
            return self
        bidders = []
        for b in self.bidders:
            strategy = b.strategy
            if local_start is not None and isinstance(strategy, LocallyOptimalStrategy):
                strategy = LocallyOptimalStrategy(local_start)
            if secure_variant is not None and isinstance(
                strategy, SecureProfitMaxStrategy
            ):
                strategy = SecureProfitMaxStrategy(secure_variant)
            bidders.append(BidderSpec(b.valuation, strategy))
        return Scenario(
            name=self.name,
            m=self.m,
            bidders=tuple(bidders),
            epsilon_label=self.epsilon_label,
            events=self.events,
            metadata=dict(self.metadata),
        )


def scenario_from_spec(spec: dict) -> Scenario:
    """Build a scenario from its JSON description (no events attach)."""
    for key in ("name", "m", "bidders"):
        if key not in spec:
            raise ValueError(f"scenario JSON is missing {key!r}")
    m = spec["m"]
    if not isinstance(m, int) or m < 1:
        raise ValueError(f"m must be a positive integer, got {m!r}")
    bidders = []
    for i, b in enumerate(spec["bidders"]):
        if "valuation" not in b or "strategy" not in b:
            raise ValueError(f"bidder {i} needs 'valuation' and 'strategy'")
        valuation = valuation_from_spec(b["valuation"])
        strategy = strategy_from_spec(b["strategy"], m)
        bidders.append(BidderSpec(valuation, strategy))
    return Scenario(
        name=spec["name"],
        m=m,
        bidders=tuple(bidders),
        epsilon_label=str(spec.get("epsilon_label", "1")),
    )


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as handle:
        return scenario_from_spec(json.load(handle))


# ---------------------------------------------------------------------------
# Event predicates (top-level functions so scenarios stay picklable)


def _ev_welfare_equals(target: int, outcome, welfare_value: int) -> bool:
    return welfare_value == target


def _ev_distinct_winners(outcome, welfare_value: int) -> bool:
    sizes = [mask_size(a) for a in outcome.allocation]
    return max(sizes) <= 1 and sum(sizes) == len(outcome.prices)


def _ev_first_n_empty(n: int, outcome, welfare_value: int) -> bool:
    return all(outcome.allocation[i] == 0 for i in range(n))


def _ev_sweep_by_rest(n: int, outcome, welfare_value: int) -> bool:
    if not _ev_first_n_empty(n, outcome, welfare_value):
        return False
    held = 0
    for mask in outcome.allocation:
        held |= mask
    return held == full_mask(len(outcome.prices))


def _ev_bidder_empty(idx: int, outcome, welfare_value: int) -> bool:
    return outcome.allocation[idx] == 0


def _ev_matches_allocation(parts: tuple, outcome, welfare_value: int) -> bool:
    return outcome.allocation == parts


def _ev_bidder_overpays(idx: int, valuation: Valuation, outcome, welfare_value) -> bool:
    held = outcome.allocation[idx]
    paid = sum(outcome.prices[j] for j in items_of(held))
    return valuation.value(held) - paid < 0


def _ev_none_overpay(
    indices: tuple, valuations: tuple, outcome, welfare_value
) -> bool:
    for idx, valuation in zip(indices, valuations):
        if _ev_bidder_overpays(idx, valuation, outcome, welfare_value):
            return False
    return True


# ---------------------------------------------------------------------------
# Scenario builders


def build_bad_pair(M: int = 100) -> Scenario:
    """Two bidders, two items, singles worth 1 and the pair worth M, both
    bidding truthfully: a coin flip between a welfare-2 split and a
    welfare-M sweep."""
    if M < 2:
        raise ValueError(f"M must be >= 2, got {M}")
    valuation = PairBonusValuation(m=2, unit=1, pair=M)
    bidders = tuple(BidderSpec(valuation, TruthfulStrategy()) for _ in range(2))
    return Scenario(
        name="bad_pair",
        m=2,
        bidders=bidders,
        events=(TrialEvent("welfare_2", partial(_ev_welfare_equals, 2)),),
        metadata={"family": "bad_pair", "M": M},
    )


def build_truthful_tight(k: int = 4, alpha: int = 3, L: int = 60) -> Scenario:
    """k items, L identical bidders whose first item is underweighted by
    alpha, all truthful: the crowd splits the items one each, while the
    optimum hands everything to one bidder."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if not isinstance(alpha, int) or alpha < 1:
        raise ValueError(f"alpha must be an integer >= 1, got {alpha!r}")
    if L <= k:
        raise ValueError(f"need more bidders than items (L > k), got L={L}, k={k}")
    valuation = SymmetricStepValuation(m=k, num=alpha, den=1)
    bidders = tuple(BidderSpec(valuation, TruthfulStrategy()) for _ in range(L))
    return Scenario(
        name="truthful_tight",
        m=k,
        bidders=bidders,
        events=(TrialEvent("distinct_winners", partial(_ev_distinct_winners)),),
        metadata={"family": "truthful_tight", "k": k, "alpha": alpha, "L": L},
    )


def _cluster_table(m: int, block: int, alpha: int) -> TableValuation:
    """Value (s-1)*alpha**2 + alpha for s > 0 items held inside the block,
    0 outside it."""
    values = []
    for mask in range(1 << m):
        s = bin(mask & block).count("1")
        values.append(0 if s == 0 else (s - 1) * alpha * alpha + alpha)
    return TableValuation(tuple(values))


def build_local_tight(
    k: int = 2, n: int = 2, alpha: int = 2, H: int = 3, L: int = 5
) -> Scenario:
    """k*n+1 items; n cluster bidders each wanting a private block of k
    items with sharply complementary values, and L price-war copies per
    block item wanting that item plus the shared last item z. Everyone
    bids by local search."""
    for name, val in (("k", k), ("n", n), ("alpha", alpha), ("H", H), ("L", L)):
        if not isinstance(val, int) or val < 1:
            raise ValueError(f"{name} must be an integer >= 1, got {val!r}")
    if H <= alpha:
        raise ValueError(f"need H > alpha, got H={H}, alpha={alpha}")
    m = k * n + 1
    if m > 14:
        raise ValueError(
            f"k*n+1 = {m} items is beyond this scenario's exact-table scale (14)"
        )
    z = m - 1
    bidders = []
    for i in range(n):
        block = 0
        for j in range(i * k, (i + 1) * k):
            block |= 1 << j
        bidders.append(
            BidderSpec(_cluster_table(m, block, alpha), LocallyOptimalStrategy())
        )
    for x in range(k * n):
        pair_valuation = TargetPairValuation(
            m=m, target=x, special=z, unit=1, special_value=H, bonus=alpha
        )
        for _ in range(L):
            bidders.append(BidderSpec(pair_valuation, LocallyOptimalStrategy()))
    return Scenario(
        name="local_tight",
        m=m,
        bidders=tuple(bidders),
        events=(
            TrialEvent("clusters_empty", partial(_ev_first_n_empty, n)),
            TrialEvent("pairs_sweep", partial(_ev_sweep_by_rest, n)),
        ),
        metadata={
            "family": "local_tight", "k": k, "n": n, "alpha": alpha, "H": H, "L": L,
        },
    )


def build_superadditive(M: int = 50) -> Scenario:
    """Two items; two unit-demand bidders valuing one item each at 2, and
    one bidder valuing the pair at 2M but singles at only 1. Everyone bids
    securely, so the pair bidder goes home empty no matter how large M is."""
    if M < 2:
        raise ValueError(f"M must be >= 2, got {M}")
    bidders = (
        BidderSpec(UnitDemandValuation((2, 0)), SecureProfitMaxStrategy()),
        BidderSpec(UnitDemandValuation((0, 2)), SecureProfitMaxStrategy()),
        BidderSpec(PairBonusValuation(m=2, unit=1, pair=2 * M), SecureProfitMaxStrategy()),
    )
    return Scenario(
        name="superadditive",
        m=2,
        bidders=bidders,
        events=(
            TrialEvent("bundler_empty", partial(_ev_bidder_empty, 2)),
            TrialEvent("welfare_4", partial(_ev_welfare_equals, 4)),
        ),
        metadata={"family": "superadditive", "M": M},
    )


def build_scripted_partition(partition: Sequence) -> Scenario:
    """One bidder per part, each scripted to bid exactly her part in round
    0: the auction ends after one bidding round with the partition as the
    allocation, every item at price 1."""
    parts = []
    for part in partition:
        mask = part if isinstance(part, int) else mask_of(part)
        if mask <= 0:
            raise InvalidPartition(f"every part must be a nonempty item set")
        parts.append(mask)
    if not parts:
        raise InvalidPartition("need at least one part")
    seen = 0
    for i, mask in enumerate(parts):
        if mask & seen:
            clash = list(items_of(mask & seen))
            raise InvalidPartition(f"part {i} reuses item(s) {clash}")
        seen |= mask
    m = seen.bit_length()
    parts = tuple(parts)
    bidders = tuple(
        BidderSpec(
            AdditiveValuation(tuple(1 if (mask >> j) & 1 else 0 for j in range(m))),
            ScriptedStrategy((mask,)),
        )
        for mask in parts
    )
    return Scenario(
        name="scripted_partition",
        m=m,
        bidders=bidders,
        events=(
            TrialEvent("matches_partition", partial(_ev_matches_allocation, parts)),
        ),
        metadata={"family": "scripted_partition",
                  "parts": [list(items_of(p)) for p in parts]},
    )


def build_nonsecure_punishment() -> Scenario:
    """Three items. Bidder 0 is scripted to open with an insecure bid on
    the first two items (worth 1 together to her) and wins them both at a
    total price of 2, locking in a loss. Six additive copy-bidders value
    only the third item and bid securely, running its price up to their
    common value without ever overpaying."""
    overbidder_values = tuple(
        1 if mask & 0b011 else 0 for mask in range(8)
    )
    overbidder = BidderSpec(
        TableValuation(overbidder_values), ScriptedStrategy((0b011,))
    )
    copy_valuation = AdditiveValuation((0, 0, 10))
    copies = tuple(
        BidderSpec(copy_valuation, SecureProfitMaxStrategy()) for _ in range(6)
    )
    bidders = (overbidder,) + copies
    copy_indices = tuple(range(1, 7))
    return Scenario(
        name="punishment",
        m=3,
        bidders=bidders,
        events=(
            TrialEvent(
                "scripted_overpays",
                partial(_ev_bidder_overpays, 0, bidders[0].valuation),
            ),
            TrialEvent(
                "copies_no_loss",
                partial(
                    _ev_none_overpay,
                    copy_indices,
                    tuple(copy_valuation for _ in copy_indices),
                ),
            ),
        ),
        metadata={"family": "punishment"},
    )


BUILTIN_SCENARIOS: dict[str, tuple[Callable[..., Scenario], dict]] = {
    "bad_pair": (build_bad_pair, {"M": 100}),
    "truthful_tight": (build_truthful_tight, {"k": 4, "alpha": 3, "L": 60}),
    "local_tight": (build_local_tight,
                    {"k": 2, "n": 2, "alpha": 2, "H": 3, "L": 5}),
    "superadditive": (build_superadditive, {"M": 50}),
    "lemma4": (build_superadditive, {"M": 50}),
    "punishment": (build_nonsecure_punishment, {}),
}


def build_builtin(name: str, **params) -> Scenario:
    """Look up a named builtin and build it with overridable defaults."""
    if name not in BUILTIN_SCENARIOS:
        known = ", ".join(sorted(BUILTIN_SCENARIOS))
        raise ValueError(f"unknown builtin scenario {name!r} (known: {known})")
    builder, defaults = BUILTIN_SCENARIOS[name]
    unknown = set(params) - set(defaults)
    if unknown:
        raise ValueError(
            f"builtin {name!r} does not take parameter(s) {sorted(unknown)}"
        )
    merged = {**defaults, **params}
    return builder(**merged)


# ---------------------------------------------------------------------------
# Trial harness

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def derive_seed(master: int, index: int) -> int:
    """Per-trial seed: the index-th output of a splitmix64 stream whose
    state starts at the master seed. Stable across platforms and processes."""
    z = ((master & _MASK64) + _GOLDEN * (index + 1)) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class TrialRow:
    """One auction's results: exact integers and fractions only."""

    trial: int
    seed: int
    rounds: int
    welfare: int
    ratio: Fraction
    lam: Union[Fraction, float, None]
    diverged: bool
    events: tuple[bool, ...]


def _trial_row(
    scenario: Scenario,
    valuations,
    strategies,
    optimal_value: int,
    trial: int,
    seed: int,
    max_rounds,
    collect_lambda: bool,
    subset_cap: int,
    record_trace: bool,
):
    try:
        outcome = run_auction(
            valuations,
            strategies,
            seed,
            max_rounds=max_rounds,
            record_trace=record_trace,
        )
    except Divergence as exc:
        outcome = exc.outcome
    w = welfare(outcome.allocation, valuations)
    ratio = Fraction(w, optimal_value) if optimal_value else Fraction(1)
    lam = None
    if collect_lambda and outcome.records is not None:
        lam = measure_rationality(outcome, valuations, subset_cap).lam
    events = tuple(
        bool(ev.check(outcome, w)) for ev in scenario.events
    )
    row = TrialRow(
        trial=trial,
        seed=seed,
        rounds=outcome.rounds,
        welfare=w,
        ratio=ratio,
        lam=lam,
        diverged=outcome.diverged,
        events=events,
    )
    return row, outcome


def _run_chunk(args) -> list[TrialRow]:
    (scenario, master_seed, start, stop, optimal_value, max_rounds,
     collect_lambda, subset_cap) = args
    valuations = scenario.valuations
    strategies = scenario.strategies
    record = collect_lambda
    rows = []
    for trial in range(start, stop):
        row, _ = _trial_row(
            scenario, valuations, strategies, optimal_value, trial,
            derive_seed(master_seed, trial), max_rounds, collect_lambda,
            subset_cap, record,
        )
        rows.append(row)
    return rows


@dataclass(frozen=True)
class TrialStats:
    """All rows of a Monte Carlo run plus the scenario-level constants."""

    scenario_name: str
    m: int
    master_seed: int
    optimal: int
    event_names: tuple[str, ...]
    rows: tuple[TrialRow, ...]

    @property
    def trials(self) -> int:
        return len(self.rows)

    def aggregates(self) -> dict:
        return aggregate_rows(self.rows, self.event_names)

    def summary_dict(self) -> dict:
        summary = {
            "scenario": self.scenario_name,
            "m": self.m,
            "seed": self.master_seed,
            "optimal": self.optimal,
        }
        summary.update(self.aggregates())
        return summary

    def to_csv(self, file: Union[IO[str], str]) -> None:
        if isinstance(file, str):
            with open(file, "w", encoding="utf-8", newline="") as handle:
                self.to_csv(handle)
            return
        writer = csv.writer(file)
        writer.writerow(
            ["trial", "seed", "rounds", "welfare", "optimal", "ratio_num",
             "ratio_den", "lambda_num", "lambda_den", "diverged"]
            + [f"event_{name}" for name in self.event_names]
        )
        for row in self.rows:
            if row.lam is None:
                lam_num, lam_den = "", ""
            elif row.lam == inf:
                lam_num, lam_den = "inf", "1"
            else:
                lam_num, lam_den = row.lam.numerator, row.lam.denominator
            writer.writerow(
                [row.trial, row.seed, row.rounds, row.welfare, self.optimal,
                 row.ratio.numerator, row.ratio.denominator, lam_num, lam_den,
                 int(row.diverged)]
                + [int(flag) for flag in row.events]
            )


def aggregate_rows(
    rows: Sequence[TrialRow], event_names: Sequence[str]
) -> dict:
    """Aggregates recomputable from the rows alone (and hence from a CSV)."""
    n = len(rows)
    welfare_sum = sum(r.welfare for r in rows)
    rounds_total = sum(r.rounds for r in rows)
    ratio_sum = sum((r.ratio for r in rows), Fraction(0))
    lam_values = [r.lam for r in rows if r.lam is not None]
    max_lambda: Union[Fraction, float, None] = max(lam_values, default=None)
    if max_lambda is None:
        max_lambda_enc = None
    elif max_lambda == inf:
        max_lambda_enc = "inf"
    else:
        max_lambda_enc = str(max_lambda)
    out = {
        "trials": n,
        "welfare_sum": welfare_sum,
        "welfare_mean": welfare_sum / n if n else 0.0,
        "rounds_total": rounds_total,
        "rounds_mean": rounds_total / n if n else 0.0,
        "ratio_mean": float(ratio_sum / n) if n else 0.0,
        "max_lambda": max_lambda_enc,
        "diverged": sum(1 for r in rows if r.diverged),
        "events": {},
    }
    for idx, name in enumerate(event_names):
        count = sum(1 for r in rows if r.events[idx])
        out["events"][name] = count
        out[f"freq_{name}"] = count / n if n else 0.0
    return out


def read_rows_csv(file: Union[IO[str], str]) -> tuple[tuple[str, ...], list[TrialRow]]:
    """Parse a CSV written by TrialStats.to_csv back into rows."""
    if isinstance(file, str):
        with open(file, "r", encoding="utf-8", newline="") as handle:
            return read_rows_csv(handle)
    reader = csv.reader(file)
    header = next(reader)
    prefix = ["trial", "seed", "rounds", "welfare", "optimal", "ratio_num",
              "ratio_den", "lambda_num", "lambda_den", "diverged"]
    if header[: len(prefix)] != prefix:
        raise ValueError(f"unexpected CSV header {header!r}")
    event_names = tuple(
        name[len("event_"):] for name in header[len(prefix):]
    )
    rows = []
    for rec in reader:
        (trial, seed, rounds, w, _optimal, rnum, rden, lnum, lden,
         diverged) = rec[: len(prefix)]
        if lnum == "":
            lam: Union[Fraction, float, None] = None
        elif lnum == "inf":
            lam = inf
        else:
            lam = Fraction(int(lnum), int(lden))
        rows.append(
            TrialRow(
                trial=int(trial),
                seed=int(seed),
                rounds=int(rounds),
                welfare=int(w),
                ratio=Fraction(int(rnum), int(rden)),
                lam=lam,
                diverged=bool(int(diverged)),
                events=tuple(bool(int(x)) for x in rec[len(prefix):]),
            )
        )
    return event_names, rows


def run_trials(
    scenario: Scenario,
    trials: int,
    seed: int = 0,
    *,
    jobs: int = 1,
    max_rounds: Optional[int] = None,
    collect_lambda: bool = True,
    subset_cap: int = 20,
    trace_path: Optional[str] = None,
) -> TrialStats:
    """Run `trials` independent auctions of the scenario.

    Per-trial seeds come from derive_seed(seed, trial), so results do not
    depend on `jobs`. The exact welfare oracle runs once. A diverged trial
    (round budget exhausted) is recorded with its partial outcome and
    flagged, not fatal. trace_path writes the (single) trial's JSONL
    trace and therefore requires trials == 1.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    if trace_path is not None and trials != 1:
        raise ValueError("a trace can only be written for a single trial")

    optimal = optimal_welfare(scenario.valuations)
    event_names = tuple(ev.name for ev in scenario.events)

    if trace_path is not None:
        row, outcome = _trial_row(
            scenario, scenario.valuations, scenario.strategies, optimal.welfare,
            0, derive_seed(seed, 0), max_rounds, collect_lambda, subset_cap,
            record_trace=True,
        )
        write_trace_jsonl(outcome.records, trace_path)
        rows = [row]
    elif jobs == 1 or trials == 1:
        rows = _run_chunk(
            (scenario, seed, 0, trials, optimal.welfare, max_rounds,
             collect_lambda, subset_cap)
        )
    else:
        jobs = min(jobs, trials)
        chunk = -(-trials // jobs)
        args = [
            (scenario, seed, start, min(start + chunk, trials), optimal.welfare,
             max_rounds, collect_lambda, subset_cap)
            for start in range(0, trials, chunk)
        ]
        rows = []
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for part in pool.map(_run_chunk, args):
                rows.extend(part)

    return TrialStats(
        scenario_name=scenario.name,
        m=scenario.m,
        master_seed=seed,
        optimal=optimal.welfare,
        event_names=event_names,
        rows=tuple(rows),
    )
