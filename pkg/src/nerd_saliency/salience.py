"""Per-atom salience, pixel propagation and hierarchical aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _random
from .atoms import SparseAtomSet, build_atoms, sparsify_atoms
from .divergence import DivergenceParams, divergence_matrix, estimate_sigma
from .segmentation import Superpixels, slic
from .validation import check_atom_counts, check_positive_int

DEFAULT_ATOM_COUNTS = (5, 25, 45, 65, 85)


@dataclass(frozen=True)
class HierarchyConfig:
    """Atom count per layer plus the shared segmentation/divergence settings.

    ``sigma=None`` selects the auto width independently for every layer.
    """

    atom_counts: tuple = DEFAULT_ATOM_COUNTS
    n_superpixels: int = 300
    compactness: float = 10.0
    slic_iterations: int = 10
    sigma: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "atom_counts", check_atom_counts(self.atom_counts))
        check_positive_int(self.n_superpixels, "n_superpixels")
        check_positive_int(self.slic_iterations, "slic_iterations")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


def layer_salience(atoms: SparseAtomSet, beta: np.ndarray) -> np.ndarray:
    """``alpha_i = sum_{j != i} |s_j| * beta_ij`` with ``|s_j|`` in pixels.

    Each row is summed with ``math.fsum`` so the result is the correctly
    rounded sum of the products.
    """
    beta = np.asarray(beta, dtype=np.float64)
    n = len(atoms)
    if beta.shape != (n, n):
        raise ValueError(f"divergence matrix shape {beta.shape} does not match {n} sparse atoms")
    sizes = np.asarray(atoms.region_sizes, dtype=np.float64)
    terms = sizes[None, :] * beta
    np.fill_diagonal(terms, 0.0)
    return np.array([math.fsum(row) for row in terms])


def propagate_to_pixels(alpha, atoms: SparseAtomSet, seg: Superpixels) -> np.ndarray:
    """Paint every pixel with the salience of the sparse atom owning its element."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if len(atoms.assignment) != seg.count:
        raise ValueError(
            f"region sets cover {len(atoms.assignment)} elements, segmentation has {seg.count}"
        )
    if len(alpha) != len(atoms):
        raise ValueError(f"{len(alpha)} salience values for {len(atoms)} sparse atoms")
    return alpha[atoms.assignment[seg.labels]]


def normalize_map(total: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant map becomes all zeros."""
    lo, hi = float(total.min()), float(total.max())
    if hi <= lo:
        return np.zeros_like(total, dtype=np.float64)
    return (total - lo) / (hi - lo)


def aggregate_layers(layer_maps) -> np.ndarray:
    """Unnormalized sum of per-layer pixel maps, in layer order."""
    layer_maps = list(layer_maps)
    total = np.zeros_like(layer_maps[0], dtype=np.float64)
    for m in layer_maps:
        total += m
    return total


def salience_layers(features, seg: Superpixels, cfg: HierarchyConfig, seed=0):
    """Per-layer pixel maps over one shared segmentation."""
    atom_set = build_atoms(features, seg)
    maps = []
    for index, k in enumerate(cfg.atom_counts):
        rng = _random.stage_rng(seed, _random.KMEANS, index)
        sparse = sparsify_atoms(atom_set, k, rng)
        params = estimate_sigma(sparse) if cfg.sigma is None else DivergenceParams.from_sigma(cfg.sigma)
        alpha = layer_salience(sparse, divergence_matrix(sparse, params))
        maps.append(propagate_to_pixels(alpha, sparse, seg))
    return maps


def hierarchical_salience(features, lab, cfg: HierarchyConfig | None = None, seed=0, segmentation=None):
    """Saliency map in [0, 1] summed over the configured atom-count layers.

    Args:
        features: ``(H, W, l)`` per-pixel responses.
        lab: ``(H, W, 3)`` CIELAB image used for the superpixels.
        cfg: hierarchy settings; defaults to five layers of 5..85 atoms.
        seed: root seed for the k-means initialisations.
        segmentation: optional precomputed superpixels, reused as is.
    """
    cfg = cfg or HierarchyConfig()
    features = np.asarray(features, dtype=np.float64)
    lab = np.asarray(lab, dtype=np.float64)
    if features.shape[:2] != lab.shape[:2]:
        raise ValueError(f"features {features.shape[:2]} and image {lab.shape[:2]} differ in size")
    if segmentation is None:
        n_sp = min(cfg.n_superpixels, lab.shape[0] * lab.shape[1])
        segmentation = slic(lab, n_sp, cfg.compactness, cfg.slic_iterations)
    maps = salience_layers(features, segmentation, cfg, seed)
    return normalize_map(aggregate_layers(maps))
