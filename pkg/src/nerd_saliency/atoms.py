"""Superpixel atoms and their k-means sparsification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import _random
from .segmentation import Superpixels
from .validation import check_positive_int


@dataclass(frozen=True, eq=False)
class AtomSet:
    """Mean response ``atoms[i]`` of element ``i`` and its pixel count ``sizes[i]``."""

    atoms: np.ndarray
    sizes: np.ndarray

    def __len__(self):
        return len(self.atoms)


@dataclass(frozen=True, eq=False)
class SparseAtomSet:
    """Cluster centroids over atoms.

    Attributes:
        atoms: ``(k, l)`` centroids.
        assignment: ``(m,)`` index of the sparse atom that encodes each element.
        region_sizes: ``(k,)`` total pixel count of each region set.
    """

    atoms: np.ndarray
    assignment: np.ndarray
    region_sizes: np.ndarray

    def __len__(self):
        return len(self.atoms)

    @property
    def regions(self) -> list[np.ndarray]:
        """Element indices belonging to each region set."""
        return [np.flatnonzero(self.assignment == i) for i in range(len(self))]


def _group_means(values: np.ndarray, groups: np.ndarray, n_groups: int):
    """Per-group means computed as ``first + mean(x - first)``.

    Shifting by the group's first member makes the mean of identical vectors
    exactly that vector, independent of group size.
    """
    order = np.argsort(groups, kind="stable")
    sorted_groups = groups[order]
    starts = np.flatnonzero(np.r_[True, sorted_groups[1:] != sorted_groups[:-1]])
    present = sorted_groups[starts]
    ref = values[order[starts]]
    ref_full = np.zeros((n_groups, values.shape[1]))
    ref_full[present] = ref
    sums = np.add.reduceat(values[order] - ref_full[sorted_groups], starts, axis=0)
    counts = np.diff(np.r_[starts, len(groups)])
    means = np.zeros((n_groups, values.shape[1]))
    means[present] = ref + sums / counts[:, None]
    full_counts = np.zeros(n_groups, dtype=np.int64)
    full_counts[present] = counts
    return means, full_counts


def build_atoms(features: np.ndarray, seg: Superpixels) -> AtomSet:
    """Average the per-pixel responses over every superpixel."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 2:
        features = features[:, :, None]
    if features.shape[:2] != seg.shape:
        raise ValueError(f"features {features.shape[:2]} and segmentation {seg.shape} differ in size")
    flat = features.reshape(-1, features.shape[2])
    means, counts = _group_means(flat, seg.labels.ravel(), seg.count)
    if np.any(counts == 0):
        raise ValueError("segmentation has empty labels")
    return AtomSet(means, counts)


class SparseAtomKMeans(ClusterMixin, BaseEstimator):
    """Lloyd k-means with k-means++ seeding.

    Stops after ``max_iter`` iterations or when no centroid moves more than
    ``tol``. A cluster that empties is re-seeded with the point farthest from
    its own centroid; clusters that stay empty (only possible with duplicate
    points) are dropped, so ``cluster_centers_`` may have fewer than
    ``n_clusters`` rows. Clusters are ordered by their lowest member index.

    Attributes:
        cluster_centers_: ``(k, d)`` centroids.
        labels_: cluster index per sample.
        inertia_: final within-cluster sum of squares.
        inertia_history_: within-cluster sum of squares after every iteration.
        n_iter_: iterations run.
    """

    def __init__(self, n_clusters=8, max_iter=100, tol=1e-6, random_state=None):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def _rng(self):
        if isinstance(self.random_state, np.random.Generator):
            return self.random_state
        return _random.stage_rng(0 if self.random_state is None else self.random_state, _random.KMEANS)

    def _init_centers(self, X, k, rng):
        m = len(X)
        chosen = [int(rng.integers(m))]
        d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
        for _ in range(1, k):
            total = d2.sum()
            if total > 0:
                nxt = int(rng.choice(m, p=d2 / total))
            else:
                nxt = int(np.flatnonzero(~np.isin(np.arange(m), chosen))[0])
            chosen.append(nxt)
            d2 = np.minimum(d2, np.sum((X - X[nxt]) ** 2, axis=1))
        return X[chosen].copy()

    @staticmethod
    def _sq_dists(X, centers):
        return np.sum((X[:, None, :] - centers[None, :, :]) ** 2, axis=2)

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        check_positive_int(self.n_clusters, "n_clusters")
        k = min(self.n_clusters, len(X))
        rng = self._rng()
        centers = self._init_centers(X, k, rng)
        history = []
        n_iter = 0
        for n_iter in range(1, self.max_iter + 1):
            d2 = self._sq_dists(X, centers)
            labels = np.argmin(d2, axis=1)
            labels = self._repair_empty(X, labels, centers, d2, k)
            new_centers, counts = _group_means(X, labels, k)
            empty = counts == 0
            new_centers[empty] = centers[empty]
            shift = np.max(np.sqrt(np.sum((new_centers - centers) ** 2, axis=1)))
            centers = new_centers
            history.append(float(np.sum((X - centers[labels]) ** 2)))
            if shift < self.tol:
                break

        used = np.unique(labels)
        first_member = np.array([np.flatnonzero(labels == c)[0] for c in used])
        order = used[np.argsort(first_member)]
        remap = np.empty(k, dtype=np.intp)
        remap[order] = np.arange(len(order))
        self.cluster_centers_ = centers[order]
        self.labels_ = remap[labels]
        self.inertia_history_ = history
        self.inertia_ = history[-1]
        self.n_iter_ = n_iter
        return self

    @staticmethod
    def _repair_empty(X, labels, centers, d2, k):
        counts = np.bincount(labels, minlength=k)
        own = d2[np.arange(len(X)), labels].copy()
        for j in np.flatnonzero(counts == 0):
            movable = counts[labels] > 1
            if not movable.any():
                break
            far = np.where(movable, own, -1.0)
            i = int(np.argmax(far))
            if far[i] <= 0:
                break
            counts[labels[i]] -= 1
            labels[i] = j
            counts[j] += 1
            own[i] = 0.0
            centers[j] = X[i]
        return labels

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, dtype=np.float64)
        return np.argmin(self._sq_dists(X, self.cluster_centers_), axis=1)


def sparsify_atoms(atoms: AtomSet, k: int, seed=0) -> SparseAtomSet:
    """Cluster atoms (unweighted) into at most ``k`` sparse atoms.

    ``seed`` may be an integer or a ``numpy.random.Generator``.
    """
    if len(atoms) == 0:
        raise ValueError("cannot sparsify an empty atom set")
    k = check_positive_int(k, "k")
    km = SparseAtomKMeans(n_clusters=k, random_state=seed).fit(atoms.atoms)
    n = len(km.cluster_centers_)
    region_sizes = np.bincount(km.labels_, weights=atoms.sizes, minlength=n).astype(np.int64)
    return SparseAtomSet(km.cluster_centers_, km.labels_, region_sizes)
