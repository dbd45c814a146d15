"""Clustering-based marking metrics: purity and normalized marking cost.

Purity is the fraction of samples that fall in their cluster's majority
category. The marking cost models a human marker verifying every answer in
each cluster and then marking the majority set once plus each minority
answer individually; normalized by the cost of marking every answer twice,
it reduces to K/(2H) + 1 - purity/2 when verification and marking take the
same time.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass


class MetricsError(ValueError):
    pass


@dataclass
class ClusterReport:
    size: int
    majority_category: str
    majority_size: int


@dataclass
class Evaluation:
    purity: float
    mc: float
    k: int
    h: int
    j: int
    per_cluster: list[ClusterReport]


def _check(labels, categories) -> None:
    if len(labels) != len(categories):
        raise MetricsError(f"{len(labels)} labels vs {len(categories)} categories")
    if not labels:
        raise MetricsError("empty labeling")


def _cluster_majorities(labels, categories) -> dict[object, tuple[int, int, str]]:
    """Per cluster: (size, majority count, majority category id).

    Majority-count ties resolve to the lexicographically smallest category;
    the tie only affects which category is reported, never any cost."""
    counts: dict[object, Counter] = {}
    for label, cat in zip(labels, categories):
        counts.setdefault(label, Counter())[cat] += 1
    out = {}
    for label, counter in counts.items():
        best_cat = min(counter, key=lambda c: (-counter[c], str(c)))
        out[label] = (sum(counter.values()), counter[best_cat], str(best_cat))
    return out


def purity(labels, categories) -> float:
    """Sum over clusters of the majority-category overlap, divided by the
    sample count."""
    _check(labels, categories)
    majorities = _cluster_majorities(labels, categories)
    return sum(m for _, m, _ in majorities.values()) / len(labels)


def marking_cost_raw(labels, categories, time_unit: float = 1.0, alpha: float = 1.0) -> float:
    """Total marking time: verifying every answer (alpha * T each) plus
    marking each cluster's majority set once and every minority answer."""
    _check(labels, categories)
    if not 0.0 < alpha <= 1.0:
        raise MetricsError("alpha must lie in (0, 1]")
    total = 0.0
    for size, majority, _ in _cluster_majorities(labels, categories).values():
        total += size * alpha * time_unit + (1 + size - majority) * time_unit
    return total


def marking_cost(labels, categories) -> float:
    """Normalized marking cost in (0, 1]: K/(2H) + 1 - purity/2."""
    _check(labels, categories)
    k = len(set(labels))
    h = len(labels)
    return k / (2 * h) + (1.0 - purity(labels, categories) / 2.0)


def evaluate(labels, categories) -> Evaluation:
    """Purity, marking cost and the per-cluster breakdown, ordered by cluster label."""
    _check(labels, categories)
    majorities = _cluster_majorities(labels, categories)
    reports = [
        ClusterReport(size=size, majority_category=cat, majority_size=majority)
        for _, (size, majority, cat) in sorted(majorities.items(), key=lambda kv: str(kv[0]))
    ]
    return Evaluation(
        purity=purity(labels, categories),
        mc=marking_cost(labels, categories),
        k=len(majorities),
        h=len(labels),
        j=len(set(categories)),
        per_cluster=reports,
    )


def normalized_mutual_info(labels, categories) -> float:
    """Arithmetic-mean NMI; optional report extra, not used for acceptance."""
    _check(labels, categories)
    n = len(labels)
    joint: Counter = Counter(zip(labels, categories))
    lc: Counter = Counter(labels)
    cc: Counter = Counter(categories)
    h_l = -sum(c / n * math.log(c / n) for c in lc.values())
    h_c = -sum(c / n * math.log(c / n) for c in cc.values())
    if h_l == 0.0 and h_c == 0.0:
        return 1.0
    if h_l == 0.0 or h_c == 0.0:
        return 0.0
    mi = sum(c / n * math.log(n * c / (lc[a] * cc[b])) for (a, b), c in joint.items())
    return 2.0 * mi / (h_l + h_c)


def adjusted_rand_index(labels, categories) -> float:
    """Chance-adjusted pair-counting agreement; optional report extra."""
    _check(labels, categories)
    n = len(labels)
    joint: Counter = Counter(zip(labels, categories))
    lc: Counter = Counter(labels)
    cc: Counter = Counter(categories)
    comb2 = lambda x: x * (x - 1) // 2
    sum_joint = sum(comb2(c) for c in joint.values())
    sum_l = sum(comb2(c) for c in lc.values())
    sum_c = sum(comb2(c) for c in cc.values())
    expected = sum_l * sum_c / comb2(n) if comb2(n) else 0.0
    max_index = (sum_l + sum_c) / 2.0
    if max_index == expected:
        return 1.0
    return (sum_joint - expected) / (max_index - expected)
