"""Saliency detection from the divergence of sparse convolutional neural responses."""

from .atoms import AtomSet, SparseAtomKMeans, SparseAtomSet, build_atoms, sparsify_atoms
from .divergence import DivergenceParams, divergence_matrix, estimate_sigma, pairwise_distances
from .estimator import NeRDFeatures, NeRDSaliency
from .evaluation import PRCurve, auc, bench_pipeline, evaluate_dataset, f_measure, pr_curve, roc_auc
from .features import (
    BlockConfig,
    FilterBank,
    export_filter_bank,
    forward_block,
    generate_connectivity_mask,
    generate_filter_bank,
    import_filter_bank,
    pixel_features,
    sparse_conv,
    upsample_features,
)
from .imaging import load_image, rgb_to_lab, save_gray
from .salience import HierarchyConfig, hierarchical_salience, layer_salience, propagate_to_pixels
from .segmentation import Superpixels, slic

__version__ = "0.1.0"
