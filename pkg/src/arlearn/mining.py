"""Frequent-itemset mining and association-rule derivation.

Two miners share one contract: ``apriori`` returns every frequent itemset,
``max_miner`` returns only the maximal ones (``expand_maximal`` recovers the
full family with exact supports). ``brute_force_frequent`` is a deliberately
naive enumeration kept as an independent test oracle. Supports are exact
integer ratios; threshold comparisons are exact (``Fraction``-based, ``>=``,
no epsilon) so results are reproducible bit for bit.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from itertools import groupby
from typing import Iterable, Optional, Union

from .errors import EngineError
from .model import Dataset, Item, ItemSet, Rule, Schema

MAX_ORACLE_ITEMS = 20

# (itemset, weight) pairs; the weight defaults to 1 when a bare item
# collection is supplied.
Transaction = tuple[frozenset[Item], int]
TransactionSource = Union[Dataset, Iterable]


@dataclass
class MiningStats:
    """Run telemetry: how much work a mining pass did."""

    candidates_generated: int = 0
    support_counting_passes: int = 0
    rules_emitted: int = 0


@dataclass(frozen=True)
class FrequentItemSet:
    """An itemset together with its exact support count and fraction."""

    items: ItemSet
    support_count: int
    support: float


@dataclass(frozen=True)
class CandidateNode:
    """A set-enumeration node: committed head plus ordered candidate extensions.

    The tail is disjoint from the head and ordered by ascending support of
    head∪{item} (re-sorted at every expansion).
    """

    head: frozenset[Item]
    head_count: int
    tail: tuple[Item, ...]

    def __post_init__(self):
        if self.head & frozenset(self.tail):
            raise ValueError("candidate tail overlaps the committed head")


def threshold_fraction(threshold: float) -> Fraction:
    """Exact rational meaning of a threshold.

    Goes through the shortest decimal representation so that a threshold
    written ``0.4`` means 2/5 rather than the nearest binary float.
    """
    return Fraction(str(threshold))


def meets_threshold(count: int, total: int, threshold: float) -> bool:
    """Exact ``count/total >= threshold`` with no floating-point slack."""
    return Fraction(count, total) >= threshold_fraction(threshold)


def _as_transactions(data: TransactionSource) -> tuple[list[Transaction], int]:
    """Normalize a dataset or raw weighted transactions to (itemset, weight) pairs."""
    txns: list[Transaction] = []
    if isinstance(data, Dataset):
        for row in data.rows:
            txns.append((row.itemset().as_frozenset(), row.weight))
    else:
        for entry in data:
            if (
                isinstance(entry, tuple)
                and len(entry) == 2
                and isinstance(entry[1], int)
                and not isinstance(entry[1], bool)
            ):
                items, weight = entry
            else:
                items, weight = entry, 1
            if isinstance(items, ItemSet):
                itemset = items.as_frozenset()
            else:
                itemset = ItemSet(items).as_frozenset()
            if weight < 1:
                raise ValueError("transaction weight must be positive")
            txns.append((itemset, weight))
    total = sum(w for _, w in txns)
    return txns, total


def _freeze(items: frozenset[Item], count: int, total: int) -> FrequentItemSet:
    return FrequentItemSet(ItemSet(items), count, count / total)


def support_count(target: ItemSet, data: TransactionSource) -> int:
    """Sum of weights of transactions whose itemset contains ``target``."""
    if isinstance(data, Dataset):
        for item in target:
            if data.schema.attribute(item.attribute) is None:
                raise EngineError(
                    "unknown-attribute", f"{item.attribute!r} is not in the dataset schema"
                )
    txns, _ = _as_transactions(data)
    wanted = target.as_frozenset()
    return sum(w for t, w in txns if wanted <= t)


def apriori(
    data: TransactionSource, min_support: float, stats: Optional[MiningStats] = None
) -> set[FrequentItemSet]:
    """Level-wise frequent-itemset mining with downward-closure pruning.

    Starts from single items and joins frequent (k-1)-sets that share a
    prefix; a candidate is counted only if every (k-1)-subset is frequent.
    Returns every itemset whose support meets ``min_support``, with exact
    counts.
    """
    txns, total = _as_transactions(data)
    if total == 0:
        raise EngineError("empty-dataset", "cannot mine an empty dataset")
    stats = stats if stats is not None else MiningStats()

    singles: Counter = Counter()
    for t, w in txns:
        for item in t:
            singles[item] += w
    stats.candidates_generated += len(singles)
    stats.support_counting_passes += 1

    result: dict[frozenset[Item], int] = {}
    current: list[tuple[Item, ...]] = []
    for item, count in singles.items():
        if meets_threshold(count, total, min_support):
            result[frozenset((item,))] = count
            current.append((item,))
    current.sort()

    while current:
        previous = set(current)
        candidates: list[tuple[Item, ...]] = []
        for _, group in groupby(current, key=lambda t: t[:-1]):
            members = list(group)
            for i in range(len(members)):
                for j in range(i + 1, len(members)):
                    left, right = members[i], members[j]
                    if left[-1].attribute == right[-1].attribute:
                        continue  # one value per attribute
                    cand = left + (right[-1],)
                    if all(
                        cand[:k] + cand[k + 1 :] in previous for k in range(len(cand) - 1)
                    ):
                        candidates.append(cand)
        if not candidates:
            break
        stats.candidates_generated += len(candidates)
        stats.support_counting_passes += 1
        next_level: list[tuple[Item, ...]] = []
        for cand in candidates:
            cand_set = frozenset(cand)
            count = sum(w for t, w in txns if cand_set <= t)
            if meets_threshold(count, total, min_support):
                result[cand_set] = count
                next_level.append(cand)
        next_level.sort()
        current = next_level

    return {_freeze(items, count, total) for items, count in result.items()}


def max_miner(
    data: TransactionSource, min_support: float, stats: Optional[MiningStats] = None
) -> set[FrequentItemSet]:
    """Maximal frequent itemsets via set-enumeration with head/tail expansion.

    Each node commits a head and carries candidate tail extensions. When
    head∪tail is frequent the whole subtree collapses into one candidate
    maximal set; otherwise infrequent extensions are dropped and the rest
    are reordered by ascending support before expanding. A final filter
    removes any candidate subsumed by a set found in another subtree.
    """
    txns, total = _as_transactions(data)
    if total == 0:
        raise EngineError("empty-dataset", "cannot mine an empty dataset")
    stats = stats if stats is not None else MiningStats()

    singles: Counter = Counter()
    for t, w in txns:
        for item in t:
            singles[item] += w
    stats.candidates_generated += len(singles)
    stats.support_counting_passes += 1

    frequent_singles = sorted(
        ((item, count) for item, count in singles.items() if meets_threshold(count, total, min_support)),
        key=lambda pair: (pair[1], pair[0]),
    )

    found: dict[frozenset[Item], int] = {}

    def count_set(items: frozenset[Item]) -> int:
        return sum(w for t, w in txns if items <= t)

    def record(items: frozenset[Item], count: int) -> None:
        if items and items not in found:
            found[items] = count

    def expand(node: CandidateNode) -> None:
        if not node.tail:
            record(node.head, node.head_count)
            return
        hut = node.head | frozenset(node.tail)
        if any(hut <= known for known in found):
            return  # subtree subsumed by an already-found maximal set
        stats.candidates_generated += 1
        stats.support_counting_passes += 1
        hut_count = count_set(hut)
        if meets_threshold(hut_count, total, min_support):
            record(hut, hut_count)
            return  # everything below is a subset of hut
        extensions: list[tuple[Item, int]] = []
        for item in node.tail:
            stats.candidates_generated += 1
            count = count_set(node.head | {item})
            if meets_threshold(count, total, min_support):
                extensions.append((item, count))
        if not extensions:
            record(node.head, node.head_count)
            return
        extensions.sort(key=lambda pair: (pair[1], pair[0]))  # dynamic reordering
        for idx, (item, count) in enumerate(extensions):
            expand(
                CandidateNode(
                    node.head | {item}, count, tuple(e[0] for e in extensions[idx + 1 :])
                )
            )

    for idx, (item, count) in enumerate(frequent_singles):
        expand(
            CandidateNode(
                frozenset((item,)), count, tuple(p[0] for p in frequent_singles[idx + 1 :])
            )
        )

    maximal = {
        items: count
        for items, count in found.items()
        if not any(items < other for other in found)
    }
    return {_freeze(items, count, total) for items, count in maximal.items()}


def expand_maximal(
    maximal: set[FrequentItemSet], data: TransactionSource, min_support: float
) -> set[FrequentItemSet]:
    """Recover the full frequent family (with exact supports) from maximal sets.

    Enumerates every nonempty subset of each maximal set, deduplicates, and
    recounts supports against the data; the result equals ``apriori`` on the
    same inputs.
    """
    txns, total = _as_transactions(data)
    subsets: set[frozenset[Item]] = set()
    for fis in maximal:
        items = tuple(fis.items)
        n = len(items)
        for mask in range(1, 1 << n):
            subsets.add(frozenset(items[i] for i in range(n) if mask & (1 << i)))
    family: set[FrequentItemSet] = set()
    for subset in subsets:
        count = sum(w for t, w in txns if subset <= t)
        if meets_threshold(count, total, min_support):
            family.add(_freeze(subset, count, total))
    return family


def brute_force_frequent(data: TransactionSource, min_support: float) -> set[FrequentItemSet]:
    """Exhaustive oracle: count every itemset realized by some transaction.

    Independent of the miners — per transaction it enumerates all nonempty
    sub-itemsets via bitmask submask iteration and tallies weights, then
    filters by support. Guarded to at most ``MAX_ORACLE_ITEMS`` distinct
    items.
    """
    txns, total = _as_transactions(data)
    if total == 0:
        return set()
    universe = sorted({item for t, _ in txns for item in t})
    if len(universe) > MAX_ORACLE_ITEMS:
        raise EngineError(
            "too-many-items",
            f"{len(universe)} distinct items exceeds the oracle bound of {MAX_ORACLE_ITEMS}",
        )
    bit_of = {item: 1 << i for i, item in enumerate(universe)}
    counts: Counter = Counter()
    for t, w in txns:
        mask = 0
        for item in t:
            mask |= bit_of[item]
        sub = mask
        while sub:
            counts[sub] += w
            sub = (sub - 1) & mask
    family: set[FrequentItemSet] = set()
    for mask, count in counts.items():
        if meets_threshold(count, total, min_support):
            items = frozenset(universe[i] for i in range(len(universe)) if mask & (1 << i))
            family.add(_freeze(items, count, total))
    return family


def derive_rules(
    frequent: set[FrequentItemSet],
    schema: Schema,
    min_confidence: float,
    stats: Optional[MiningStats] = None,
    source: str = "apriori",
) -> set[Rule]:
    """Split each frequent itemset into input antecedent and output consequent.

    A frequent itemset with at least one input and one output item yields a
    rule iff support(itemset)/support(input part) meets ``min_confidence``.
    Empty antecedents are never emitted. Itemsets touching attributes the
    schema does not declare are skipped.
    """
    index = {fis.items: fis for fis in frequent}
    input_names = set(schema.input_names)
    output_names = set(schema.output_names)
    rules: set[Rule] = set()
    for fis in frequent:
        ant_items = [i for i in fis.items if i.attribute in input_names]
        cons_items = [i for i in fis.items if i.attribute in output_names]
        if not ant_items or not cons_items:
            continue
        if len(ant_items) + len(cons_items) != len(fis.items):
            continue  # itemset touches attributes outside the schema
        antecedent = ItemSet(ant_items)
        ant_fis = index.get(antecedent)
        if ant_fis is None:
            raise ValueError(
                f"frequent family is not downward closed: missing {antecedent!r}"
            )
        confidence = Fraction(fis.support_count, ant_fis.support_count)
        if confidence >= threshold_fraction(min_confidence):
            rules.add(
                Rule(
                    antecedent=antecedent,
                    consequent=ItemSet(cons_items),
                    support=fis.support,
                    confidence=float(confidence),
                    source=source,
                )
            )
            if stats is not None:
                stats.rules_emitted += 1
    return rules
