import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from nerd_saliency.atoms import AtomSet, SparseAtomKMeans, build_atoms, sparsify_atoms
from nerd_saliency.segmentation import Superpixels


def brute_force_atoms(features, labels):
    m = labels.max() + 1
    out = np.zeros((m, features.shape[2]))
    for i in range(m):
        ys, xs = np.nonzero(labels == i)
        out[i] = np.mean([features[y, x] for y, x in zip(ys, xs)], axis=0)
    return out


def test_single_element_is_global_mean(rng):
    f = rng.random((5, 6, 4))
    atoms = build_atoms(f, Superpixels(np.zeros((5, 6), dtype=int)))
    assert np.allclose(atoms.atoms[0], f.reshape(-1, 4).mean(0), atol=1e-12)
    assert atoms.sizes.tolist() == [30]


def test_two_pixel_element_mean():
    f = np.array([[[1.0], [3.0]]])
    atoms = build_atoms(f, Superpixels(np.array([[0, 0]])))
    assert atoms.atoms[0, 0] == 2.0


def test_singleton_elements_reproduce_features(rng):
    f = rng.random((3, 4, 5))
    atoms = build_atoms(f, Superpixels(np.arange(12).reshape(3, 4)))
    assert np.array_equal(atoms.atoms, f.reshape(12, 5))


def test_matches_brute_force_mean(rng):
    f = rng.random((16, 16, 6))
    labels = rng.integers(0, 9, (16, 16))
    labels = np.unique(labels, return_inverse=True)[1].reshape(16, 16)
    atoms = build_atoms(f, Superpixels(labels))
    assert np.max(np.abs(atoms.atoms - brute_force_atoms(f, labels))) < 1e-9


def test_identical_features_give_bit_identical_atoms(rng):
    f = np.full((20, 20, 3), 0.1)
    labels = rng.integers(0, 7, (20, 20))
    atoms = build_atoms(f, Superpixels(labels))
    assert np.all(atoms.atoms == 0.1)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        build_atoms(np.zeros((4, 4, 2)), Superpixels(np.zeros((4, 5), dtype=int)))


def _atom_set(vectors, sizes=None):
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    sizes = np.ones(len(vectors), dtype=int) if sizes is None else np.asarray(sizes)
    return AtomSet(vectors, sizes)


def test_k_equals_m_is_identity(rng):
    atoms = _atom_set(rng.random((9, 3)), rng.integers(1, 50, 9))
    sparse = sparsify_atoms(atoms, 9, seed=1)
    assert np.array_equal(sparse.atoms, atoms.atoms)
    assert sparse.assignment.tolist() == list(range(9))
    assert np.array_equal(sparse.region_sizes, atoms.sizes)


def test_k_one_is_unweighted_mean(rng):
    atoms = _atom_set(rng.random((7, 2)), rng.integers(1, 30, 7))
    sparse = sparsify_atoms(atoms, 1)
    assert np.allclose(sparse.atoms[0], atoms.atoms.mean(0), atol=1e-12)
    assert sparse.region_sizes.tolist() == [atoms.sizes.sum()]


def _best_two_partition(x):
    """Exhaustive search over all 2-partitions of a small 1-D set."""
    best = None
    n = len(x)
    for bits in itertools.product([0, 1], repeat=n):
        bits = np.array(bits)
        if bits.min() == bits.max():
            continue
        sse = sum(((x[bits == g] - x[bits == g].mean()) ** 2).sum() for g in (0, 1))
        if best is None or sse < best[0] - 1e-15:
            best = (sse, bits)
    return best[1]


def test_one_dimensional_two_clusters():
    x = np.array([0.0, 0.1, 10.0, 10.1])
    bits = _best_two_partition(x)
    expected_groups = sorted(sorted(np.flatnonzero(bits == g).tolist()) for g in (0, 1))
    assert expected_groups == [[0, 1], [2, 3]]
    sparse = sparsify_atoms(_atom_set(x), 2, seed=0)
    assert sorted(r.tolist() for r in sparse.regions) == expected_groups
    assert np.allclose(sorted(sparse.atoms[:, 0]), [0.05, 10.05], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), m=st.integers(1, 60), k=st.integers(1, 70), dim=st.integers(1, 8))
def test_partition_and_centroid_properties(seed, m, k, dim):
    rng = np.random.default_rng(seed)
    atoms = _atom_set(rng.random((m, dim)), rng.integers(1, 100, m))
    sparse = sparsify_atoms(atoms, k, seed=seed)
    assert 1 <= len(sparse) <= min(k, m)
    assert sorted(np.concatenate(sparse.regions).tolist()) == list(range(m))
    assert all(len(r) > 0 for r in sparse.regions)
    assert sparse.region_sizes.sum() == atoms.sizes.sum()
    for i, members in enumerate(sparse.regions):
        assert np.max(np.abs(sparse.atoms[i] - atoms.atoms[members].mean(0))) < 1e-9


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), m=st.integers(2, 80), k=st.integers(2, 20))
def test_objective_is_monotone(seed, m, k):
    X = np.random.default_rng(seed).normal(size=(m, 4))
    km = SparseAtomKMeans(n_clusters=k, random_state=seed).fit(X)
    h = np.array(km.inertia_history_)
    assert np.all(np.diff(h) <= 1e-9 * max(1.0, h[0]))
    assert km.n_iter_ <= 100


def test_deterministic_under_seed(rng):
    atoms = _atom_set(rng.random((50, 5)))
    a, b = sparsify_atoms(atoms, 8, seed=3), sparsify_atoms(atoms, 8, seed=3)
    assert np.array_equal(a.atoms, b.atoms) and np.array_equal(a.assignment, b.assignment)


def test_duplicate_atoms_never_leave_empty_regions():
    atoms = _atom_set(np.zeros((6, 3)), np.arange(1, 7))
    sparse = sparsify_atoms(atoms, 4)
    assert len(sparse) == 1
    assert sparse.region_sizes.tolist() == [21]


def test_empty_cluster_is_repaired():
    X = np.array([[0.0], [0.0], [0.0], [1.0], [5.0]])
    km = SparseAtomKMeans(n_clusters=3, random_state=0)
    km._init_centers = lambda X, k, rng: np.array([[0.0], [0.0], [5.0]])
    km.fit(X)
    assert len(km.cluster_centers_) == 3


def test_empty_atom_set():
    with pytest.raises(ValueError):
        sparsify_atoms(AtomSet(np.zeros((0, 3)), np.zeros(0, dtype=int)), 2)


def test_estimator_protocol(rng):
    X = rng.random((30, 2))
    km = SparseAtomKMeans(n_clusters=3, random_state=1)
    assert km.get_params()["n_clusters"] == 3
    fitted = clone(km).fit(X)
    assert np.array_equal(fitted.predict(X), fitted.labels_)
    assert np.array_equal(km.fit_predict(X), fitted.labels_)
