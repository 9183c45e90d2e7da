"""Exact, tie-inclusive k-nearest-neighbor regression.

The neighbor set of ``x`` is every stored point inside the closed ball of
radius ``r_k(x)``, the smallest radius holding at least ``k`` points, so
it can hold more than ``k`` points when distances tie. A kd-tree
(``scipy.spatial.cKDTree``) proposes candidates only. Membership is
decided on squared distances, and any candidate within a relative 1e-9
of the k-th squared distance is re-checked in exact rational arithmetic.
The result is exact for every input, duplicates and lattices included.

The estimate is the correctly rounded sum of the member values
(``math.fsum``) divided by their count, so it does not depend on the order
in which points were inserted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .core import ValidationError, as_context, as_contexts

# Relative band around the k-th squared distance that is resolved exactly.
_BAND = 1e-9
_TINY = 1e-300
# Extra tree neighbors fetched beyond k so a near-tie rarely needs a ball query.
_EXTRA = 4


class InsufficientDataError(ValueError):
    """Raised when a query asks for more neighbors than there are points."""


def default_k(n: int, dim: int) -> int:
    """``max(1, min(n, floor(n ** (2 / (2 + dim)))))`` in exact integer arithmetic."""
    if n < 1 or dim < 1:
        raise ValueError("n and dim must be positive")
    k = int(math.floor(n ** (2.0 / (2.0 + dim))))
    # k <= n^(2/(2+dim))  <=>  k^(2+dim) <= n^2
    while k > 0 and k ** (2 + dim) > n * n:
        k -= 1
    while (k + 1) ** (2 + dim) <= n * n:
        k += 1
    return max(1, min(n, k))


@dataclass(frozen=True)
class KnnEstimate:
    value: float
    radius: float
    neighbor_count: int


def _exact_sqdist(p: np.ndarray, x: np.ndarray) -> Fraction:
    return sum(((Fraction(float(a)) - Fraction(float(b))) ** 2 for a, b in zip(p, x)), Fraction(0))


class SpatialIndex:
    """Growing point set with exact k-NN queries.

    Points are appended one at a time (bandit loop) or in bulk. The tree is
    rebuilt lazily once the point count has doubled since the last build or
    the overflow buffer (points added after the build, scanned exhaustively
    by every query) reaches ``max_overflow``. Above ``tree_max_dim`` dimensions no tree is built
    and every query is a full scan.
    """

    def __init__(self, dim: int, points=None, values=None, *, min_tree_size: int = 64,
                 max_overflow: int = 512, tree_max_dim: int = 16, leafsize: int = 16):
        if dim < 1:
            raise ValidationError("dim must be positive")
        self.dim = dim
        self.min_tree_size = min_tree_size
        self.max_overflow = max_overflow
        self.tree_max_dim = tree_max_dim
        self.leafsize = leafsize
        self._pts = np.empty((16, dim))
        self._vals = np.empty(16)
        self._n = 0
        self._tree: Optional[cKDTree] = None
        self._tree_n = 0
        if points is not None:
            self.extend(points, values)

    @classmethod
    def from_history(cls, history, dim: Optional[int] = None, **kw) -> "SpatialIndex":
        return cls(dim or history.dim, history.contexts, history.rewards, **kw)

    def __len__(self) -> int:
        return self._n

    @property
    def points(self) -> np.ndarray:
        return self._pts[: self._n]

    @property
    def values(self) -> np.ndarray:
        return self._vals[: self._n]

    def _reserve(self, need: int) -> None:
        cap = self._vals.shape[0]
        if need <= cap:
            return
        cap = max(need, 2 * cap)
        pts = np.empty((cap, self.dim))
        pts[: self._n] = self._pts[: self._n]
        vals = np.empty(cap)
        vals[: self._n] = self._vals[: self._n]
        # The tree keeps a reference to the old buffer, which never changes below _tree_n.
        self._pts, self._vals = pts, vals

    def append(self, x, y: float) -> None:
        x = as_context(x, self.dim)
        y = float(y)
        if not math.isfinite(y):
            raise ValidationError("value must be finite")
        self._reserve(self._n + 1)
        self._pts[self._n] = x
        self._vals[self._n] = y
        self._n += 1

    def extend(self, points, values) -> None:
        P = as_contexts(points, self.dim)
        V = np.asarray(values, dtype=np.float64).reshape(-1)
        if len(P) != len(V):
            raise ValidationError("points and values differ in length")
        if not np.all(np.isfinite(V)):
            raise ValidationError("values must be finite")
        self._reserve(self._n + len(P))
        self._pts[self._n : self._n + len(P)] = P
        self._vals[self._n : self._n + len(P)] = V
        self._n += len(P)

    def build(self) -> "SpatialIndex":
        """Force the tree to cover every point (no overflow)."""
        if self.dim <= self.tree_max_dim and self._n >= 1 and self._tree_n != self._n:
            self._tree = cKDTree(self._pts[: self._n], leafsize=self.leafsize,
                                 balanced_tree=False, copy_data=False)
            self._tree_n = self._n
        return self

    def _maybe_rebuild(self) -> None:
        if self.dim > self.tree_max_dim:
            return
        if self._n < self.min_tree_size:
            return
        if self._n >= 2 * self._tree_n or self._n - self._tree_n >= self.max_overflow:
            self.build()

    # -- queries -----------------------------------------------------------

    def _check_k(self, k: int) -> None:
        if self._n == 0:
            raise InsufficientDataError("index is empty")
        if k < 1:
            raise ValueError("k must be positive")
        if k > self._n:
            raise InsufficientDataError(f"k={k} exceeds the {self._n} stored points")

    def _candidates(self, X: np.ndarray, k: int):
        """Candidate indices (B, C) and their float squared distances.

        Also returns, per row, the squared tree distance below which every
        unfetched tree point is guaranteed to lie outside (inf if all fetched).
        """
        B = len(X)
        self._maybe_rebuild()
        idx_parts, d2_parts = [], []
        fence = np.full(B, np.inf)
        if self._tree is not None:
            m = min(self._tree_n, k + _EXTRA)
            dist, idx = self._tree.query(X, m)
            idx = np.asarray(idx).reshape(B, m)
            if m < self._tree_n:
                fence = np.asarray(dist).reshape(B, m)[:, -1] ** 2
            # np.take is far cheaper than fancy indexing for this gather
            diff = np.take(self._pts, idx, axis=0) - X[:, None, :]
            idx_parts.append(idx)
            d2_parts.append(np.einsum("bcd,bcd->bc", diff, diff))
        if self._tree_n < self._n:
            over = self._pts[self._tree_n : self._n]
            diff = over[None, :, :] - X[:, None, :]
            idx_parts.append(np.broadcast_to(np.arange(self._tree_n, self._n), (B, len(over))))
            d2_parts.append(np.einsum("bcd,bcd->bc", diff, diff))
        if len(idx_parts) == 1:
            return idx_parts[0], d2_parts[0], fence
        return np.concatenate(idx_parts, axis=1), np.concatenate(d2_parts, axis=1), fence

    def _solve(self, X: np.ndarray, k: int):
        """Candidates plus membership.

        Returns ``(idx, mask, r2, hard)``: for rows not in ``hard`` the
        neighbor set is ``idx[b][mask[b]]``; ``hard`` maps the remaining rows
        to their exactly resolved index arrays. ``r2`` holds squared radii.
        """
        idx, d2, fence = self._candidates(X, k)
        kth = np.partition(d2, k - 1, axis=1)[:, k - 1]
        slack = _BAND * kth + _TINY
        lo, hi = kth - slack, kth + slack
        band = (d2 >= lo[:, None]) & (d2 <= hi[:, None])
        simple = (band.sum(axis=1) == 1) & (fence > hi * (1 + 4 * _BAND) + _TINY)
        mask = d2 <= kth[:, None]
        r2 = kth.copy()
        hard = {}
        for b in np.flatnonzero(~simple).tolist():
            hard[b], r2[b] = self._resolve(X[b], k, idx[b], d2[b], hi[b], fence[b])
        return idx, mask, r2, hard

    def _neighbor_sets(self, X: np.ndarray, k: int):
        """Per query: (sorted neighbor index array, squared radius as float)."""
        idx, mask, r2, hard = self._solve(X, k)
        return [
            (hard[b] if b in hard else np.sort(idx[b][mask[b]]), float(r2[b]))
            for b in range(len(X))
        ]

    def _resolve(self, x, k, idx, d2, hi, fence):
        if not fence > hi * (1 + 4 * _BAND) + _TINY:
            # Ties may continue past the fetched tree neighbors: widen to a ball query.
            r = math.sqrt(hi * (1 + 4 * _BAND) + _TINY) * (1 + _BAND)
            tree_idx = np.asarray(self._tree.query_ball_point(x, r), dtype=np.int64)
            idx = np.concatenate([tree_idx, np.arange(self._tree_n, self._n)])
            diff = self._pts[idx] - x
            d2 = np.einsum("cd,cd->c", diff, diff)
            kth = np.partition(d2, k - 1)[k - 1]
            slack = _BAND * kth + _TINY
            hi = kth + slack
        else:
            kth = np.partition(d2, k - 1)[k - 1]
            slack = _BAND * kth + _TINY
        lo = kth - slack
        inside = idx[d2 < lo]
        band_idx = idx[(d2 >= lo) & (d2 <= hi)]
        need = k - len(inside)
        exact = sorted((_exact_sqdist(self._pts[i], x), int(i)) for i in band_idx)
        r2 = exact[need - 1][0]
        members = [i for e, i in exact if e <= r2]
        sel = np.sort(np.concatenate([inside, np.asarray(members, dtype=np.int64)]))
        return sel, float(r2)

    def neighbors(self, x, k: int) -> np.ndarray:
        """Sorted indices of the tie-inclusive k-NN set of ``x``."""
        self._check_k(k)
        x = as_context(x, self.dim)
        return self._neighbor_sets(x[None, :], k)[0][0]

    def radius(self, x, k: int) -> float:
        self._check_k(k)
        x = as_context(x, self.dim)
        return math.sqrt(self._neighbor_sets(x[None, :], k)[0][1])

    def regress(self, x, k: int) -> KnnEstimate:
        self._check_k(k)
        x = as_context(x, self.dim)
        sel, r2 = self._neighbor_sets(x[None, :], k)[0]
        return KnnEstimate(math.fsum(self._vals[sel].tolist()) / len(sel), math.sqrt(r2), len(sel))

    def regress_many(self, X, k: int) -> np.ndarray:
        """Estimates at each row of ``X`` (values only)."""
        self._check_k(k)
        X = as_contexts(X, self.dim)
        idx, mask, _, hard = self._solve(X, k)
        counts = mask.sum(axis=1).tolist()
        # Row-major flattening keeps each row's members contiguous.
        flat = np.take(self._vals, idx)[mask].tolist()
        out = np.empty(len(X))
        pos = 0
        fsum = math.fsum
        for b, c in enumerate(counts):
            out[b] = fsum(flat[pos : pos + c]) / c
            pos += c
        for b, sel in hard.items():
            out[b] = fsum(self._vals[sel].tolist()) / len(sel)
        return out


def knn_radius(index: SpatialIndex, x, k: int) -> float:
    return index.radius(x, k)


def knn_regress(index: SpatialIndex, x, k: int) -> KnnEstimate:
    return index.regress(x, k)
