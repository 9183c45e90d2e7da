"""Connected regions where an arm is estimated to be top, and Hausdorff
distances for comparing them with ground truth."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .core import ValidationError, as_contexts


class UnionFind:
    """Disjoint sets over ``0..n-1`` with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, a: int) -> int:
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True


@dataclass
class EpsilonGraph:
    """Vertices joined when their Euclidean distance is at most ``radius``."""

    vertices: np.ndarray
    radius: float
    edges: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValidationError("radius must be positive")
        self.vertices = as_contexts(self.vertices) if len(self.vertices) else np.empty((0, 1))
        if self.edges is None:
            self.edges = _edges_within(self.vertices, self.radius)

    def __len__(self) -> int:
        return len(self.vertices)


def _edges_within(P: np.ndarray, R: float) -> np.ndarray:
    if len(P) < 2:
        return np.empty((0, 2), dtype=np.int64)
    # Slightly widened tree query, then the closed threshold on exact squared distances.
    pairs = cKDTree(P).query_pairs(R * (1 + 1e-9), output_type="ndarray")
    if len(pairs) == 0:
        return np.empty((0, 2), dtype=np.int64)
    diff = P[pairs[:, 0]] - P[pairs[:, 1]]
    keep = np.einsum("ij,ij->i", diff, diff) <= R * R
    return pairs[keep]


@dataclass
class RegionEstimate:
    """Recovered components: index arrays into ``points``, ordered by their smallest index."""

    points: np.ndarray
    components: list
    arm: int = -1

    def __len__(self) -> int:
        return len(self.components)

    def component_points(self) -> list[np.ndarray]:
        return [self.points[c] for c in self.components]

    def write_csv(self, path) -> None:
        dim = self.points.shape[1] if len(self.points) else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["component_id", *(f"context_{j}" for j in range(dim))])
            for cid, comp in enumerate(self.components):
                for i in comp:
                    w.writerow([cid, *(repr(float(v)) for v in self.points[i])])

    @staticmethod
    def read_csv(path) -> list[np.ndarray]:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        if not rows:
            return []
        data = np.array([[float(v) for v in r] for r in rows])
        ids = data[:, 0].astype(np.int64)
        return [data[ids == c, 1:] for c in range(ids.max() + 1)]


def connected_components(points, R: float, arm: int = -1) -> RegionEstimate:
    """Components of the R-graph on ``points`` via union-find."""
    if not R > 0:
        raise ValidationError("R must be positive")
    if len(points) == 0:
        return RegionEstimate(np.empty((0, 1)), [], arm)
    graph = EpsilonGraph(points, R)
    n = len(graph)
    uf = UnionFind(n)
    for a, b in graph.edges.tolist():
        uf.union(a, b)
    roots = np.array([uf.find(i) for i in range(n)])
    # np.unique's first-occurrence index orders components by smallest member.
    _, first, inverse = np.unique(roots, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    labels = rank[inverse.reshape(-1)]
    components = [np.flatnonzero(labels == c) for c in range(len(order))]
    return RegionEstimate(graph.vertices, components, arm)


def select_top_vertices(policy, contexts, arm: int) -> np.ndarray:
    """Contexts at which ``policy`` picks ``arm`` (after its own tie-break)."""
    if not 0 <= arm < policy.num_arms:
        raise ValidationError(f"arm {arm} out of range [0, {policy.num_arms})")
    X = as_contexts(contexts)
    return X[np.asarray(policy.choose(X)) == arm]


def recover_regions(policy, contexts, arm: int, R: float) -> RegionEstimate:
    return connected_components(select_top_vertices(policy, contexts, arm), R, arm)


def directed_hausdorff(A, B) -> float:
    """``sup_{a in A} min_{b in B} |a - b|``."""
    return float(cKDTree(B).query(A)[0].max())


def hausdorff_distance(A, B) -> float:
    A = as_contexts(A)
    B = as_contexts(B, A.shape[1])
    if len(A) == 0 or len(B) == 0:
        raise ValidationError("Hausdorff distance is undefined for an empty set")
    return max(directed_hausdorff(A, B), directed_hausdorff(B, A))


def match_components(recovered: list[np.ndarray], truth_label: np.ndarray) -> dict[int, int]:
    """Greedy overlap matching of recovered to true components.

    ``truth_label[q]`` holds, for recovered component ``q``, the true
    component id of each of its points (-1 for points outside every true
    component). Pairs are taken largest overlap first; returns
    ``{recovered_index: true_index}``.
    """
    pairs = []
    for q, labels in enumerate(truth_label):
        ids, counts = np.unique(labels[labels >= 0], return_counts=True)
        pairs.extend((int(c), q, int(p)) for p, c in zip(ids, counts))
    pairs.sort(key=lambda x: (-x[0], x[1], x[2]))
    out, used = {}, set()
    for _, q, p in pairs:
        if q not in out and p not in used:
            out[q] = p
            used.add(p)
    return out
