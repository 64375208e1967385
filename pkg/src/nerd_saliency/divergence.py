"""Pairwise neural response divergence between sparse atoms.

``beta_ij = 1 - exp(-||t_i - t_j||_2 / sigma^2)``: zero on the diagonal,
symmetric, and approaching 1 as atoms move apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .atoms import SparseAtomSet

_BELOW_ONE = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class DivergenceParams:
    """Kernel width, stored as ``sigma2`` (sigma squared) to keep it exact."""

    sigma2: float = 1.0
    mode: str = "fixed"

    def __post_init__(self):
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ValueError(f"sigma^2 must be a positive finite number, got {self.sigma2}")
        if self.mode not in ("fixed", "auto"):
            raise ValueError(f"mode must be 'fixed' or 'auto', got {self.mode!r}")

    @classmethod
    def from_sigma(cls, sigma: float) -> "DivergenceParams":
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        return cls(float(sigma) ** 2, "fixed")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


def _as_vectors(atoms) -> np.ndarray:
    vectors = atoms.atoms if isinstance(atoms, SparseAtomSet) else atoms
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    if vectors.ndim != 2:
        raise ValueError(f"atoms must be a 2-D array, got shape {vectors.shape}")
    if not np.all(np.isfinite(vectors)):
        raise ValueError("atoms contain non-finite values")
    return vectors


def pairwise_distances(atoms) -> np.ndarray:
    """Euclidean distance matrix; exactly symmetric with a zero diagonal."""
    v = _as_vectors(atoms)
    diff = v[:, None, :] - v[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def estimate_sigma(atoms) -> DivergenceParams:
    """Auto width: ``sigma^2`` is the mean distance over unordered atom pairs.

    Falls back to ``sigma^2 = 1`` when there are no pairs or all atoms coincide.
    """
    d = pairwise_distances(atoms)
    iu = np.triu_indices(len(d), k=1)
    mean = float(d[iu].mean()) if iu[0].size else 0.0
    return DivergenceParams(mean if mean > 0 else 1.0, "auto")


def divergence_matrix(atoms, params: DivergenceParams | None = None) -> np.ndarray:
    """``beta`` matrix for sparse atoms; ``params`` defaults to the auto width."""
    if params is None:
        params = estimate_sigma(atoms)
    d = pairwise_distances(atoms)
    beta = -np.expm1(-d / params.sigma2)
    # 1 - exp(-x) rounds to 1.0 for x > ~37; keep the open upper bound
    np.minimum(beta, _BELOW_ONE, out=beta)
    np.fill_diagonal(beta, 0.0)
    return beta
