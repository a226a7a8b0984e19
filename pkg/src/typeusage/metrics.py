"""Diversity metrics over an ecosystem store.

Abundance counts specimens, diversity counts distinct kinds, dominance is
the largest kind frequency of a class and entropy is the Shannon entropy
(in bits) of the kind-frequency distribution.
"""
from __future__ import annotations

import math
import statistics
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .facts import EcosystemStore

__all__ = [
    "ClassMetrics",
    "DegenerateInput",
    "EmptyInput",
    "LengthMismatch",
    "UnknownClass",
    "UnknownProject",
    "all_class_metrics",
    "class_metrics",
    "discordant_fraction",
    "distribution_summary",
    "dominance_histogram",
    "entropy_bits",
    "per_project_metrics",
    "spearman",
]

DOMINANCE_BINS = 10


class UnknownClass(KeyError):
    pass


class UnknownProject(KeyError):
    pass


class EmptyInput(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class DegenerateInput(ValueError):
    pass


@dataclass(frozen=True)
class ClassMetrics:
    receiver_type: str
    abundance: int
    diversity: int
    dominance: float
    entropy: float
    max_entropy: float
    used_method_count: int
    tu_size_histogram: dict[int, int] = field(default_factory=dict)
    max_count: int = 0  # abundance of the most frequent kind

    @property
    def dominance_bin(self) -> int:
        # exact integer arithmetic: float rounding must not move a class across bins
        return min(DOMINANCE_BINS - 1, DOMINANCE_BINS * self.max_count // self.abundance)


def entropy_bits(counts: Sequence[int]) -> float:
    """Shannon entropy in bits of the distribution given by ``counts``."""
    total = sum(counts)
    h = 0.0
    for c in counts:
        if c > 0:
            p = c / total
            h -= p * math.log2(p)
    return max(h, 0.0)


def class_metrics(store: EcosystemStore, receiver_type: str) -> ClassMetrics:
    kinds = store.class_index.get(receiver_type)
    if not kinds:
        raise UnknownClass(receiver_type)
    counts = [store.ecosystem_counts[k] for k in sorted(kinds)]
    abundance = sum(counts)
    diversity = len(counts)
    top = max(counts)
    histogram = Counter(len(k.calls) for k in kinds)
    methods = {call for k in kinds for call in k.calls}
    entropy = entropy_bits(counts) if diversity > 1 else 0.0
    return ClassMetrics(
        receiver_type=receiver_type,
        abundance=abundance,
        diversity=diversity,
        dominance=top / abundance,
        entropy=entropy,
        max_entropy=math.log2(diversity),
        used_method_count=len(methods),
        tu_size_histogram=dict(sorted(histogram.items())),
        max_count=top,
    )


def all_class_metrics(store: EcosystemStore) -> list[ClassMetrics]:
    return [class_metrics(store, c) for c in store.classes()]


def per_project_metrics(store: EcosystemStore, receiver_type: str, project: str) -> tuple[int, int]:
    """(abundance, diversity) of a class restricted to one project."""
    if project not in store.projects:
        raise UnknownProject(project)
    counts = store.project_kind_counts(project, receiver_type)
    return sum(counts.values()), len(counts)


def distribution_summary(values: Sequence[float]) -> tuple[float, float, float, float, float]:
    """(min, q1, median, q3, max) with quartiles linearly interpolated between closest ranks."""
    if not values:
        raise EmptyInput("distribution_summary needs at least one value")
    data = sorted(values)
    if len(data) == 1:
        return (data[0],) * 5
    q1, median, q3 = statistics.quantiles(data, n=4, method="inclusive")
    return data[0], q1, median, q3, data[-1]


def dominance_histogram(store: EcosystemStore, min_diversity: int | None = None) -> list[int]:
    """Class counts per dominance bin ``[0, .1), [.1, .2), ..., [.9, 1]``.

    With ``min_diversity`` only classes with strictly more kinds are counted.
    """
    bins = [0] * DOMINANCE_BINS
    for m in all_class_metrics(store):
        if min_diversity is not None and m.diversity <= min_diversity:
            continue
        bins[m.dominance_bin] += 1
    return bins


def _average_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman's rho: Pearson correlation of the average-rank vectors."""
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} != {len(y)}")
    if len(x) < 2:
        raise DegenerateInput("need at least two observations")
    rx, ry = _average_ranks(x), _average_ranks(y)
    # centered ranks are multiples of 1/2, so these sums are exact for any realistic n
    mean = (len(x) + 1) / 2
    dx = [r - mean for r in rx]
    dy = [r - mean for r in ry]
    sxx = sum(d * d for d in dx)
    syy = sum(d * d for d in dy)
    if sxx == 0 or syy == 0:
        raise DegenerateInput("zero rank variance")
    sxy = sum(a * b for a, b in zip(dx, dy))
    rho = sxy / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, rho))


def _count_inversions(seq: list) -> int:
    """Pairs i < j with seq[i] > seq[j] (strict), by merge sort."""
    if len(seq) < 2:
        return 0
    mid = len(seq) // 2
    left, right = seq[:mid], seq[mid:]
    count = _count_inversions(left) + _count_inversions(right)
    i = j = 0
    for k in range(len(seq)):
        if j >= len(right) or (i < len(left) and left[i] <= right[j]):
            seq[k] = left[i]
            i += 1
        else:
            seq[k] = right[j]
            j += 1
            count += len(left) - i
    return count


def discordant_fraction(x: Sequence[float], y: Sequence[float]) -> float:
    """Fraction of unordered pairs ordered oppositely by ``x`` and ``y``.

    Pairs tied in either coordinate are not discordant.
    """
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} != {len(y)}")
    n = len(x)
    if n < 2:
        raise DegenerateInput("need at least two observations")
    # Sorting by (x, y) leaves equal-x pairs in ascending y, so the strict
    # y-inversions are exactly the pairs with x_i < x_j and y_i > y_j.
    ys = [yv for _, yv in sorted(zip(x, y))]
    return _count_inversions(ys) / (n * (n - 1) // 2)
