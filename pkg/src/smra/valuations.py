"""Valuations over item bundles and exact near-submodularity analysis.

A valuation assigns a non-negative integer worth (in price-step units) to
every bundle of items, is monotone under inclusion, and values the empty
bundle at zero. Bundles are bitmasks (see itemsets).

The analysis half measures how far a valuation deviates from submodular
(diminishing-returns) behavior. The degree of submodularity is the
minimum, over all items x and nested contexts A strictly inside B with x
outside B, of marg(x, A) / marg(x, B), where marg(x, S) = v(S | {x}) - v(S).
Ratios with zero denominator are skipped (0/0 carries no information and
k/0 is +inf, never a minimizer); if no comparable pair remains, the
valuation is vacuously submodular and the degree is +inf. The reciprocal
of the degree, clamped below at 1, is the smallest alpha >= 1 such that an
item added to a smaller context is always worth at least 1/alpha of what it
adds to any larger context.
"""

from __future__ import annotations

import random
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from math import inf
from typing import Union

from .errors import GenerationFailed, NotMonotone, OracleTooLarge, UniverseMismatch
from .itemsets import full_mask, items_of, iter_items, mask_size

RationalLike = Union[int, Fraction]

# value_table() materializes 2**m entries; beyond this it is not a table job.
TABLE_LIMIT = 20


class Valuation(ABC):
    """A monotone integer set function with value(empty) == 0."""

    form: str = "abstract"

    @property
    @abstractmethod
    def universe_size(self) -> int:
        """Number of items m; valid bundles are masks below 2**m."""

    @abstractmethod
    def value(self, mask: int) -> int:
        """Worth of the bundle, in price-step units."""

    def check_mask(self, mask: int) -> None:
        if mask < 0 or mask >> self.universe_size:
            raise UniverseMismatch(
                f"mask {mask:#x} outside universe of size {self.universe_size}"
            )

    def value_table(self) -> tuple[int, ...]:
        """All 2**m bundle values, indexed by bitmask. Cached per instance."""
        table = getattr(self, "_table", None)
        if table is None:
            m = self.universe_size
            if m > TABLE_LIMIT:
                raise OracleTooLarge(
                    f"value table for m={m} would need 2**{m} entries"
                )
            table = tuple(self.value(mask) for mask in range(1 << m))
            object.__setattr__(self, "_table", table)
        return table

    def max_value(self) -> int:
        """Worth of the full bundle (the largest value, by monotonicity)."""
        return self.value(full_mask(self.universe_size))

    @abstractmethod
    def spec_dict(self) -> dict:
        """JSON-ready description; inverse of valuation_from_spec."""


def _require_nonneg_ints(values, what: str) -> tuple[int, ...]:
    out = []
    for x in values:
        if isinstance(x, bool) or not isinstance(x, int):
            raise NotMonotone(f"{what} must be integers, got {x!r}")
        if x < 0:
            raise NotMonotone(f"{what} must be non-negative, got {x}")
        out.append(x)
    return tuple(out)


@dataclass(frozen=True)
class TableValuation(Valuation):
    """Explicit table of all 2**m bundle values, indexed by bitmask."""

    values: tuple[int, ...]
    form = "table"

    def __post_init__(self):
        vals = _require_nonneg_ints(self.values, "table values")
        object.__setattr__(self, "values", vals)
        n = len(vals)
        if n < 2 or n & (n - 1):
            raise ValueError(f"table length must be 2**m with m >= 1, got {n}")
        if vals[0] != 0:
            raise NotMonotone(f"value of the empty bundle must be 0, got {vals[0]}")
        for mask in range(1, n):
            rest = mask
            while rest:
                low = rest & -rest
                rest ^= low
                if vals[mask] < vals[mask ^ low]:
                    raise NotMonotone(
                        f"not monotone: v({mask:#x}) = {vals[mask]} < "
                        f"v({mask ^ low:#x}) = {vals[mask ^ low]}"
                    )

    @property
    def universe_size(self) -> int:
        return len(self.values).bit_length() - 1

    def value(self, mask: int) -> int:
        self.check_mask(mask)
        return self.values[mask]

    def value_table(self) -> tuple[int, ...]:
        return self.values

    def spec_dict(self) -> dict:
        return {"form": "table", "values": list(self.values)}


@dataclass(frozen=True)
class AdditiveValuation(Valuation):
    """Each item has a fixed worth; a bundle is worth the sum."""

    weights: tuple[int, ...]
    form = "additive"

    def __post_init__(self):
        object.__setattr__(
            self, "weights", _require_nonneg_ints(self.weights, "weights")
        )
        if not self.weights:
            raise ValueError("need at least one item")

    @property
    def universe_size(self) -> int:
        return len(self.weights)

    def value(self, mask: int) -> int:
        self.check_mask(mask)
        total = 0
        w = self.weights
        while mask:
            low = mask & -mask
            total += w[low.bit_length() - 1]
            mask ^= low
        return total

    def spec_dict(self) -> dict:
        return {"form": "additive", "weights": list(self.weights)}


@dataclass(frozen=True)
class UnitDemandValuation(Valuation):
    """A bundle is worth its single best item."""

    weights: tuple[int, ...]
    form = "unit_demand"

    def __post_init__(self):
        object.__setattr__(
            self, "weights", _require_nonneg_ints(self.weights, "weights")
        )
        if not self.weights:
            raise ValueError("need at least one item")

    @property
    def universe_size(self) -> int:
        return len(self.weights)

    def value(self, mask: int) -> int:
        self.check_mask(mask)
        best = 0
        w = self.weights
        while mask:
            low = mask & -mask
            x = w[low.bit_length() - 1]
            if x > best:
                best = x
            mask ^= low
        return best

    def spec_dict(self) -> dict:
        return {"form": "unit_demand", "weights": list(self.weights)}


@dataclass(frozen=True)
class SymmetricStepValuation(Valuation):
    """Symmetric valuation: the first item is worth `den`, every further
    item adds `num`, so a bundle of s >= 1 items is worth (s-1)*num + den.

    With ratio num/den = a >= 1 the first item is underweighted by exactly
    a relative to later ones, which makes the degree of submodularity
    den/num = 1/a.
    """

    m: int
    num: int
    den: int = 1
    form = "symmetric_step"

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("need at least one item")
        if not isinstance(self.num, int) or not isinstance(self.den, int):
            raise NotMonotone("step parameters must be integers")
        if self.num < 0 or self.den < 1:
            raise NotMonotone("need num >= 0 and den >= 1")

    @property
    def universe_size(self) -> int:
        return self.m

    def value(self, mask: int) -> int:
        self.check_mask(mask)
        s = bin(mask).count("1")
        if s == 0:
            return 0
        return (s - 1) * self.num + self.den

    def spec_dict(self) -> dict:
        return {
            "form": "symmetric_step",
            "m": self.m,
            "alpha_num": self.num,
            "alpha_den": self.den,
        }


@dataclass(frozen=True)
class PairBonusValuation(Valuation):
    """Any single item is worth `unit`; two or more items are worth `pair`.

    With pair much larger than unit the second item carries almost all the
    value, a strongly complementary shape: the degree of submodularity is
    unit / (pair - unit).
    """

    m: int
    unit: int
    pair: int
    form = "pair_bonus"

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("pair_bonus needs at least two items")
        _require_nonneg_ints((self.unit, self.pair), "pair_bonus values")
        if self.pair < self.unit:
            raise NotMonotone("pair value below unit value is not monotone")

    @property
    def universe_size(self) -> int:
        return self.m

    def value(self, mask: int) -> int:
        self.check_mask(mask)
        s = bin(mask).count("1")
        if s == 0:
            return 0
        if s == 1:
            return self.unit
        return self.pair

    def spec_dict(self) -> dict:
        return {"form": "pair_bonus", "m": self.m, "unit": self.unit,
                "pair": self.pair}


@dataclass(frozen=True)
class TargetPairValuation(Valuation):
    """Interest in one target item and one special item only.

    The target alone is worth `unit`, the special item alone
    `special_value`, and the two together `special_value + bonus`; other
    items add nothing. With bonus > unit the target is worth more next to
    the special item than alone, so the shape is complementary with degree
    unit / bonus.
    """

    m: int
    target: int
    special: int
    unit: int
    special_value: int
    bonus: int
    form = "type2_pair"

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("type2_pair needs at least two items")
        for idx in (self.target, self.special):
            if not 0 <= idx < self.m:
                raise UniverseMismatch(f"item {idx} outside universe of size {self.m}")
        if self.target == self.special:
            raise ValueError("target and special item must differ")
        _require_nonneg_ints(
            (self.unit, self.special_value, self.bonus), "type2_pair values"
        )
        if self.special_value + self.bonus < self.unit:
            raise NotMonotone("pair worth less than the target alone is not monotone")

    @property
    def universe_size(self) -> int:
        return self.m

    def value(self, mask: int) -> int:
        self.check_mask(mask)
        has_target = (mask >> self.target) & 1
        has_special = (mask >> self.special) & 1
        if has_special:
            return self.special_value + (self.bonus if has_target else 0)
        return self.unit if has_target else 0

    def spec_dict(self) -> dict:
        return {
            "form": "type2_pair",
            "m": self.m,
            "target": self.target,
            "special": self.special,
            "unit": self.unit,
            "special_value": self.special_value,
            "bonus": self.bonus,
        }


def valuation_from_spec(spec: dict) -> Valuation:
    """Build a valuation from its JSON description (inverse of spec_dict)."""
    if not isinstance(spec, dict) or "form" not in spec:
        raise ValueError(f"valuation spec must be a dict with a 'form': {spec!r}")
    form = spec["form"]
    try:
        if form == "table":
            v = TableValuation(tuple(spec["values"]))
        elif form == "additive":
            v = AdditiveValuation(tuple(spec["weights"]))
        elif form == "unit_demand":
            v = UnitDemandValuation(tuple(spec["weights"]))
        elif form == "symmetric_step":
            v = SymmetricStepValuation(
                spec["m"], spec["alpha_num"], spec.get("alpha_den", 1)
            )
        elif form == "pair_bonus":
            v = PairBonusValuation(spec["m"], spec["unit"], spec["pair"])
        elif form == "type2_pair":
            v = TargetPairValuation(
                spec["m"], spec["target"], spec["special"],
                spec["unit"], spec["special_value"], spec["bonus"],
            )
        else:
            raise ValueError(f"unknown valuation form {form!r}")
    except KeyError as exc:
        raise ValueError(f"valuation spec for {form!r} is missing {exc}") from None
    declared = spec.get("universe_size")
    if declared is not None and declared != v.universe_size:
        raise UniverseMismatch(
            f"spec declares universe_size {declared} but the {form} form has "
            f"{v.universe_size} items"
        )
    return v


# ---------------------------------------------------------------------------
# Degree of submodularity


@dataclass(frozen=True)
class SubmodularityReport:
    """Exact analysis of a valuation's deviation from submodularity.

    degree  -- min over (item x, A strictly inside B, x outside B) of
               marg(x, A) / marg(x, B); +inf when no comparable pair exists.
    alpha   -- smallest a >= 1 with degree >= 1/a: max(1, 1/degree),
               +inf when degree == 0, 1 when degree == +inf.
    witness -- (x, small_mask, large_mask) achieving the degree, or None.
    """

    degree: Fraction | float
    alpha: Fraction | float
    witness: tuple[int, int, int] | None

    def to_dict(self) -> dict:
        def enc(x):
            return "inf" if x == inf else str(x)

        d: dict = {"degree": enc(self.degree), "alpha": enc(self.alpha)}
        if self.witness is None:
            d["witness"] = None
        else:
            x, small, large = self.witness
            d["witness"] = {
                "item": x,
                "small": list(items_of(small)),
                "large": list(items_of(large)),
            }
        return d


def _check_table_monotone(table, m: int) -> None:
    if table[0] != 0:
        raise NotMonotone(f"value of the empty bundle must be 0, got {table[0]}")
    for mask in range(1, 1 << m):
        v = table[mask]
        if v < 0:
            raise NotMonotone(f"negative value {v} at mask {mask:#x}")
        rest = mask
        while rest:
            low = rest & -rest
            rest ^= low
            if v < table[mask ^ low]:
                raise NotMonotone(
                    f"not monotone: v({mask:#x}) < v({mask ^ low:#x})"
                )


def degree_of_submodularity(valuation: Valuation) -> SubmodularityReport:
    """Exact degree of submodularity, with a minimizing witness.

    Runs in O(m^2 * 2^m): for each item x a lattice sweep computes, for
    every context B avoiding x, the smallest marginal of x over all
    subsets of B, so each (x, B) pair is charged the best strict
    sub-context without enumerating pairs of sets.
    """
    m = valuation.universe_size
    table = valuation.value_table()
    _check_table_monotone(table, m)

    best_num = best_den = 0  # ratio best_num / best_den; den == 0 <=> unset
    best_witness = None
    size = 1 << m
    for x in range(m):
        xbit = 1 << x
        # g[B] = min marginal of x over all subsets of B; gw[B] = a minimizer.
        g = [0] * size
        gw = [0] * size
        for b in range(size):
            if b & xbit:
                continue
            marg_b = table[b | xbit] - table[b]
            best = marg_b
            bw = b
            strict = None
            strict_w = 0
            rest = b
            while rest:
                low = rest & -rest
                rest ^= low
                c = g[b ^ low]
                if strict is None or c < strict:
                    strict = c
                    strict_w = gw[b ^ low]
                if c < best:
                    best = c
                    bw = gw[b ^ low]
            g[b] = best
            gw[b] = bw
            if strict is None or marg_b <= 0:
                continue  # no strict sub-context, or ratio is not finite
            # candidate ratio strict / marg_b; keep the minimum
            if best_den == 0 or strict * best_den < best_num * marg_b:
                best_num, best_den = strict, marg_b
                best_witness = (x, strict_w, b)

    if best_den == 0:
        return SubmodularityReport(degree=inf, alpha=Fraction(1), witness=None)
    degree = Fraction(best_num, best_den)
    if degree == 0:
        alpha: Fraction | float = inf
    else:
        alpha = max(Fraction(1), 1 / degree)
    return SubmodularityReport(degree=degree, alpha=alpha, witness=best_witness)


def is_alpha_near_submodular(valuation: Valuation, alpha: RationalLike) -> bool:
    """Whether every small-context marginal is at least 1/alpha of every
    larger-context marginal, i.e. degree >= 1/alpha."""
    alpha = Fraction(alpha)
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    report = degree_of_submodularity(valuation)
    if report.degree == inf:
        return True
    return report.degree >= Fraction(1) / alpha


# ---------------------------------------------------------------------------
# Random generation

_GENERATION_ATTEMPTS = 200


def random_near_submodular(
    m: int, alpha: RationalLike, value_cap: int, seed: int
) -> TableValuation:
    """Random monotone valuation guaranteed alpha-near-submodular.

    Built constructively as a sum of an additive part and one or two
    bundle gadgets whose individual degrees are at least 1/alpha (a sum of
    monotone parts can only be as bad as its worst part, never worse).
    The result is re-checked exactly before being returned. Deterministic
    per seed. Total value is kept within (0, value_cap]; if the budget of
    attempts runs out (e.g. value_cap == 0), raises GenerationFailed.
    """
    if not 1 <= m <= 10:
        raise ValueError(f"m must be in 1..10, got {m}")
    alpha = Fraction(alpha)
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    if value_cap < 0:
        raise ValueError(f"value_cap must be >= 0, got {value_cap}")
    p, q = alpha.numerator, alpha.denominator

    rng = random.Random(seed)
    size = 1 << m
    target_floor = Fraction(1) / alpha
    for attempt in range(_GENERATION_ATTEMPTS):
        shrink = attempt // 25  # progressively smaller values on retries
        w_hi = max(0, 2 - shrink)
        weights = [rng.randint(0, w_hi) for _ in range(m)]
        table = [0] * size
        for mask in range(1, size):
            low = mask & -mask
            table[mask] = table[mask & (mask - 1)] + weights[low.bit_length() - 1]

        if m >= 2:
            lo = 0 if shrink >= 3 else 1
            for _ in range(rng.randint(lo, max(1, 2 - shrink))):
                gadget_size = rng.randint(2, m)
                xmask = 0
                for item in rng.sample(range(m), gadget_size):
                    xmask |= 1 << item
                scale = rng.randint(1, max(1, 2 - shrink))
                kind = rng.choice(("step", "step", "cap"))
                for mask in range(1, size):
                    s = bin(mask & xmask).count("1")
                    if s == 0:
                        continue
                    if kind == "step":
                        table[mask] += ((s - 1) * p + q) * scale
                    else:  # capped: any overlap is worth the same
                        table[mask] += scale

        if not 0 < table[size - 1] <= value_cap:
            continue
        candidate = TableValuation(tuple(table))
        report = degree_of_submodularity(candidate)
        if report.degree == inf or report.degree >= target_floor:
            return candidate
    raise GenerationFailed(
        f"no valuation with total value in (0, {value_cap}] and degree >= "
        f"{target_floor} found in {_GENERATION_ATTEMPTS} attempts"
    )
