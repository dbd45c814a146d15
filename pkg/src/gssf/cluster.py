"""Clustering backends: seeded k-means over representation rows and
complete-linkage agglomeration over a distance matrix."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .sbr import SbRMatrix
from .similarity import SimilarityKind


class ClusteringError(ValueError):
    pass


MAX_LLOYD_ITERATIONS = 300


@dataclass
class Assignment:
    """Cluster index per answer. ``objective`` is the k-means within-cluster
    sum of squared distances; linkage assignments carry 0.0."""

    labels: list[int]
    k: int
    objective: float


@dataclass
class DistanceMatrix:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ClusteringError("distance matrix must be square")
        if not np.isfinite(v).all():
            raise ClusteringError("distance matrix has non-finite entries")
        if (v < 0).any():
            raise ClusteringError("distance matrix has negative entries")
        if np.diagonal(v).any():
            raise ClusteringError("distance matrix diagonal must be zero")
        if not np.array_equal(v, v.T):
            raise ClusteringError("distance matrix must be symmetric")
        self.values = v

    def __len__(self) -> int:
        return self.values.shape[0]


def kmeans_pp_init(rows: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Spread-out seeding: first centroid uniform, then proportional to the
    squared distance to the nearest chosen centroid. When every remaining
    distance is zero, pick uniformly among unchosen rows."""
    rows = np.asarray(rows, dtype=np.float64)
    n = rows.shape[0]
    if not 1 <= k <= n:
        raise ClusteringError(f"k={k} out of range for {n} rows")
    chosen = [int(rng.integers(n))]
    d2 = ((rows - rows[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        total = float(d2.sum())
        if total == 0.0:
            candidates = [i for i in range(n) if i not in chosen]
            pick = candidates[int(rng.integers(len(candidates)))]
        else:
            pick = int(rng.choice(n, p=d2 / total))
        chosen.append(pick)
        d2 = np.minimum(d2, ((rows - rows[pick]) ** 2).sum(axis=1))
    return rows[chosen].copy()


def kmeans_single(rows: np.ndarray, k: int, rng: np.random.Generator):
    """One seeded Lloyd run. Returns the assignment and the per-iteration
    objective log (non-increasing by construction)."""
    rows = np.asarray(rows, dtype=np.float64)
    n = rows.shape[0]
    centroids = kmeans_pp_init(rows, k, rng)
    labels = np.full(n, -1, dtype=np.int64)
    objectives: list[float] = []
    for _ in range(MAX_LLOYD_ITERATIONS):
        d2 = ((rows[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        point_cost = d2[np.arange(n), new_labels]
        objectives.append(float(point_cost.sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = rows[labels == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
        # Empty clusters seize the point currently farthest from its centroid.
        seized: set[int] = set()
        for c in range(k):
            if (labels == c).any():
                continue
            order = np.argsort(-point_cost, kind="stable")
            far = next(int(i) for i in order if int(i) not in seized)
            seized.add(far)
            centroids[c] = rows[far]
    return Assignment(labels=[int(x) for x in labels], k=k, objective=objectives[-1]), objectives


def kmeans(rows: np.ndarray, k: int, seed: int, restarts: int = 10) -> Assignment:
    """Best-of-``restarts`` seeded k-means; restart r uses generator seed+r,
    and ties on the objective keep the earlier restart."""
    rows = np.asarray(rows, dtype=np.float64)
    if not 1 <= k <= rows.shape[0]:
        raise ClusteringError(f"k={k} out of range for {rows.shape[0]} rows")
    if restarts < 1:
        raise ClusteringError("need at least one restart")
    best: Assignment | None = None
    for r in range(restarts):
        assignment, _ = kmeans_single(rows, k, np.random.default_rng(seed + r))
        if best is None or assignment.objective < best.objective:
            best = assignment
    return best


def complete_linkage(d: DistanceMatrix, k: int) -> Assignment:
    """Agglomerate singletons by repeatedly merging the two clusters with the
    smallest maximum pairwise member distance; distance ties break on the
    lexicographically smallest pair of cluster indices (a cluster's index is
    its smallest member). Stops at k clusters."""
    n = len(d)
    if not 1 <= k <= n:
        raise ClusteringError(f"k={k} out of range for {n} points")
    cur = d.values.copy()
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    alive = sorted(members)
    for _ in range(n - k):
        best = (np.inf, -1, -1)
        for ai in range(len(alive)):
            i = alive[ai]
            for j in alive[ai + 1 :]:
                cand = (cur[i, j], i, j)
                if cand < best:
                    best = cand
        _, i, j = best
        members[i].extend(members[j])
        del members[j]
        alive.remove(j)
        for m in alive:
            if m != i:
                merged = max(cur[i, m], cur[j, m])
                cur[i, m] = cur[m, i] = merged
    labels = [0] * n
    for cluster_label, root in enumerate(sorted(members)):
        for point in members[root]:
            labels[point] = cluster_label
    return Assignment(labels=labels, k=k, objective=0.0)


def gssf_distance_matrix(m: SbRMatrix) -> DistanceMatrix:
    """Absolute similarity scores as distances; needs a symmetric F-family
    matrix in its unnormalized form."""
    if m.kind == SimilarityKind.ASYMMETRIC:
        raise ClusteringError("asymmetric scores cannot form a distance matrix")
    if m.normalized:
        raise ClusteringError("distances come from the unnormalized matrix")
    values = np.abs(m.values)
    np.fill_diagonal(values, 0.0)
    return DistanceMatrix(values=values)


def euclidean_distance_matrix(rows: np.ndarray) -> DistanceMatrix:
    rows = np.asarray(rows, dtype=np.float64)
    n = rows.shape[0]
    values = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dist = float(np.sqrt(((rows[i] - rows[j]) ** 2).sum()))
            values[i, j] = values[j, i] = dist
    return DistanceMatrix(values=values)


def assignment_to_csv(assignment: Assignment, ids: list[str],
                      categories: list[str | None]) -> str:
    lines = ["id,cluster_label,category"]
    for sample_id, label, category in zip(ids, assignment.labels, categories):
        lines.append(f"{sample_id},{label},{category if category is not None else ''}")
    return "\n".join(lines) + "\n"


def save_assignment_csv(path: str | Path, assignment: Assignment, ids: list[str],
                        categories: list[str | None]) -> None:
    Path(path).write_text(assignment_to_csv(assignment, ids, categories), encoding="utf-8")
