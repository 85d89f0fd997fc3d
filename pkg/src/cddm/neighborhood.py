"""Exact Euclidean k-nearest-neighbour search over training inputs."""

from __future__ import annotations

import numpy as np

__all__ = ["NeighborIndex"]


class NeighborIndex:
    """Brute-force kNN over a fixed point set.

    Distances are squared Euclidean sums evaluated in a fixed order, so
    results are reproducible. Ties are broken by ascending sample index.
    """

    def __init__(self, X):
        X = np.array(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        X.flags.writeable = False
        self.X = X

    def __len__(self):
        return self.X.shape[0]

    def sq_distances(self, anchor: int) -> np.ndarray:
        diff = self.X - self.X[anchor]
        return np.einsum("ij,ij->i", diff, diff)

    def knn(self, anchor: int, k: int) -> np.ndarray:
        """Indices of the ``k`` nearest samples to sample ``anchor``, nearest first.

        The anchor itself is excluded; coincident points are legal neighbours.
        """
        N = self.X.shape[0]
        if not 0 <= anchor < N:
            raise IndexError(f"anchor {anchor} out of range for {N} samples")
        if k < 1 or k > N - 1:
            raise ValueError(f"k={k} must satisfy 1 <= k <= N-1 = {N - 1}")
        d2 = self.sq_distances(anchor)
        d2[anchor] = np.inf
        if k < N - 1:
            kth = np.partition(d2, k - 1)[k - 1]
            cand = np.flatnonzero(d2 <= kth)
        else:
            cand = np.flatnonzero(np.isfinite(d2))
        order = np.lexsort((cand, d2[cand]))
        return cand[order[:k]]

    def neighborhood(self, anchor: int, k: int) -> np.ndarray:
        """The anchor followed by its ``k`` neighbours (``k + 1`` indices)."""
        return np.concatenate([[anchor], self.knn(anchor, k)])
