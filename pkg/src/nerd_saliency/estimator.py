"""scikit-learn style estimators wrapping the saliency pipeline.

``NeRDFeatures`` maps images to per-pixel neural responses and
``NeRDSaliency`` maps images to saliency maps. Both follow the usual
``fit`` / ``transform`` / ``get_params`` protocol; ``fit`` only builds the
filter bank (nothing is learned from data), so ``fit(None)`` is valid.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .features import BlockConfig, block_grid, generate_filter_bank, import_filter_bank, pixel_features, sparse_conv
from .features import local_response_norm, max_pool, rectify, upsample_features
from .imaging import rgb_to_lab
from .salience import DEFAULT_ATOM_COUNTS, HierarchyConfig, aggregate_layers, normalize_map, salience_layers
from .segmentation import slic
from .validation import as_rgb, check_probability


def _iter_images(X):
    """Yield images from a single image or a batch; report whether it was a batch."""
    if isinstance(X, np.ndarray) and X.ndim in (2, 3):
        return [X], False
    if isinstance(X, np.ndarray) and X.ndim == 4:
        return list(X), True
    if isinstance(X, (list, tuple)):
        return list(X), True
    raise ValueError("X must be an image array (H, W[, C]) or a sequence of images")


class NeRDFeatures(TransformerMixin, BaseEstimator):
    """Per-pixel responses of a sparsely connected conv/ReLU/LRN/pool block.

    Parameters:
        n_filters, kernel_size, filter_kind: procedural bank ("gabor" or "random").
        filter_path: NERD-FB file; when set it replaces the procedural bank.
        connectivity: probability of keeping each synapse.
        stride, lrn_size, lrn_k, lrn_alpha, lrn_beta, pool_size, pool_stride,
        padding: block geometry (see ``BlockConfig``).
        seed: root seed for the connectivity mask (and random weights).
    """

    def __init__(
        self,
        n_filters=96,
        kernel_size=11,
        filter_kind="gabor",
        filter_path=None,
        connectivity=0.25,
        stride=4,
        lrn_size=5,
        lrn_k=2.0,
        lrn_alpha=1e-4,
        lrn_beta=0.75,
        pool_size=3,
        pool_stride=2,
        padding="edge",
        seed=0,
    ):
        self.n_filters = n_filters
        self.kernel_size = kernel_size
        self.filter_kind = filter_kind
        self.filter_path = filter_path
        self.connectivity = connectivity
        self.stride = stride
        self.lrn_size = lrn_size
        self.lrn_k = lrn_k
        self.lrn_alpha = lrn_alpha
        self.lrn_beta = lrn_beta
        self.pool_size = pool_size
        self.pool_stride = pool_stride
        self.padding = padding
        self.seed = seed

    def fit(self, X=None, y=None):
        p = check_probability(self.connectivity, "connectivity")
        if self.filter_path is not None:
            self.bank_ = import_filter_bank(self.filter_path, p, self.seed)
        else:
            self.bank_ = generate_filter_bank(self.n_filters, self.kernel_size, self.filter_kind, p, self.seed)
        self.block_config_ = BlockConfig(
            stride=self.stride,
            lrn_size=self.lrn_size,
            lrn_k=self.lrn_k,
            lrn_alpha=self.lrn_alpha,
            lrn_beta=self.lrn_beta,
            pool_size=self.pool_size,
            pool_stride=self.pool_stride,
            padding=self.padding,
        )
        self.n_features_out_ = self.bank_.count
        return self

    def transform(self, X):
        check_is_fitted(self, "bank_")
        images, batch = _iter_images(X)
        out = [pixel_features(img, self.bank_, self.block_config_) for img in images]
        return out if batch else out[0]


@dataclass
class Detection:
    """Output of one ``NeRDSaliency.detect`` call."""

    saliency: np.ndarray
    segmentation: object
    layer_maps: list
    timings: dict = field(default_factory=dict)


class NeRDSaliency(NeRDFeatures):
    """Image -> saliency map in [0, 1] via neural response divergence.

    Adds the hierarchy parameters to those of ``NeRDFeatures``:
    ``n_superpixels``, ``atom_counts`` (one layer each), ``compactness``,
    ``slic_iterations`` and ``sigma`` (``None`` = per-layer auto width).
    """

    def __init__(
        self,
        n_filters=96,
        kernel_size=11,
        filter_kind="gabor",
        filter_path=None,
        connectivity=0.25,
        stride=4,
        lrn_size=5,
        lrn_k=2.0,
        lrn_alpha=1e-4,
        lrn_beta=0.75,
        pool_size=3,
        pool_stride=2,
        padding="edge",
        n_superpixels=300,
        atom_counts=DEFAULT_ATOM_COUNTS,
        compactness=10.0,
        slic_iterations=10,
        sigma=None,
        seed=0,
    ):
        super().__init__(
            n_filters=n_filters,
            kernel_size=kernel_size,
            filter_kind=filter_kind,
            filter_path=filter_path,
            connectivity=connectivity,
            stride=stride,
            lrn_size=lrn_size,
            lrn_k=lrn_k,
            lrn_alpha=lrn_alpha,
            lrn_beta=lrn_beta,
            pool_size=pool_size,
            pool_stride=pool_stride,
            padding=padding,
            seed=seed,
        )
        self.n_superpixels = n_superpixels
        self.atom_counts = atom_counts
        self.compactness = compactness
        self.slic_iterations = slic_iterations
        self.sigma = sigma

    def fit(self, X=None, y=None):
        super().fit(X, y)
        self.hierarchy_ = HierarchyConfig(
            atom_counts=tuple(self.atom_counts),
            n_superpixels=self.n_superpixels,
            compactness=self.compactness,
            slic_iterations=self.slic_iterations,
            sigma=self.sigma,
        )
        return self

    def detect(self, img) -> Detection:
        """Run the full pipeline on one image, timing every stage."""
        check_is_fitted(self, "bank_")
        timings = {}
        clock = time.perf_counter

        t = clock()
        img = as_rgb(img)
        h, w = img.shape[:2]
        lab = rgb_to_lab(img)
        timings["lab"] = clock() - t

        cfg = self.block_config_
        t = clock()
        x = sparse_conv(img, self.bank_, cfg.stride, cfg.padding)
        timings["conv"] = clock() - t
        t = clock()
        x = rectify(x)
        x = local_response_norm(x, cfg.lrn_size, cfg.lrn_k, cfg.lrn_alpha, cfg.lrn_beta)
        x = max_pool(x, cfg.pool_size, cfg.pool_stride)
        timings["lrn_pool"] = clock() - t
        t = clock()
        features = upsample_features(x, w, h, block_grid(h, w, self.bank_, cfg))
        timings["upsample"] = clock() - t

        t = clock()
        hc = self.hierarchy_
        seg = slic(lab, min(hc.n_superpixels, h * w), hc.compactness, hc.slic_iterations)
        timings["slic"] = clock() - t

        t = clock()
        layers = salience_layers(features, seg, hc, self.seed)
        saliency = normalize_map(aggregate_layers(layers))
        timings["salience"] = clock() - t
        timings["total"] = sum(timings.values())
        return Detection(saliency, seg, layers, timings)

    def transform(self, X):
        images, batch = _iter_images(X)
        out = [self.detect(img).saliency for img in images]
        return out if batch else out[0]
