"""SLIC superpixels in (L, a, b, x, y) space with connectivity enforcement."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .validation import check_positive_int

_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True, eq=False)
class Superpixels:
    """Pixel-to-element labelling; labels are ``0 .. count-1``."""

    labels: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def count(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.count)


def _grid(height, width, target_m):
    step = math.sqrt(height * width / target_m)
    nx = int(min(max(round(width / step), 1), width, target_m))
    ny = int(min(max(round(target_m / nx), 1), height))
    nx = int(min(max(round(target_m / ny), 1), width))
    return step, ny, nx


def _lowest_gradient(lab, ys, xs):
    """Move each seed to the lowest-gradient pixel of its 3x3 neighbourhood."""
    h, w = lab.shape[:2]
    p = np.pad(lab, ((1, 1), (1, 1), (0, 0)), mode="edge")
    grad = np.sum((p[1:-1, 2:] - p[1:-1, :-2]) ** 2 + (p[2:, 1:-1] - p[:-2, 1:-1]) ** 2, axis=2)
    for i, (y, x) in enumerate(zip(ys, xs)):
        best_y, best_x, best = y, x, grad[y, x]
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                yy, xx = y + dy, x + dx
                if 0 <= yy < h and 0 <= xx < w and grad[yy, xx] < best:
                    best_y, best_x, best = yy, xx, grad[yy, xx]
        ys[i], xs[i] = best_y, best_x
    return ys, xs


def slic(lab, target_m: int = 300, compactness: float = 10.0, iterations: int = 10) -> Superpixels:
    """Segment a CIELAB image into roughly ``target_m`` connected superpixels.

    Seeds sit on a regular grid of spacing ``S = sqrt(H*W / target_m)`` (nudged
    to the lowest local gradient). Each iteration assigns pixels inside a
    ``2S x 2S`` window around each centre to the nearest centre under
    ``d_lab^2 + (compactness / S)^2 d_xy^2``; equal distances go to the lower
    centre index. Disconnected fragments are then merged into their largest
    neighbouring element.
    """
    lab = np.asarray(lab, dtype=np.float64)
    if lab.ndim != 3 or lab.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) Lab image, got shape {lab.shape}")
    h, w = lab.shape[:2]
    target_m = check_positive_int(target_m, "target_m")
    iterations = check_positive_int(iterations, "iterations")
    if target_m > h * w:
        raise ValueError(f"target_m={target_m} exceeds the pixel count {h * w}")
    if compactness < 0:
        raise ValueError("compactness must be non-negative")

    step, ny, nx = _grid(h, w, target_m)
    gy = (np.arange(ny) + 0.5) * h / ny - 0.5
    gx = (np.arange(nx) + 0.5) * w / nx - 0.5
    cy, cx = (a.ravel() for a in np.meshgrid(gy, gx, indexing="ij"))
    if step >= 3:
        iy, ix = _lowest_gradient(lab, np.rint(cy).astype(int), np.rint(cx).astype(int))
        cy, cx = iy.astype(np.float64), ix.astype(np.float64)
    seed_px = (np.clip(np.rint(cy), 0, h - 1).astype(int), np.clip(np.rint(cx), 0, w - 1).astype(int))
    centers = np.column_stack([lab[seed_px], cy, cx])
    n_centers = len(centers)

    yy, xx = np.mgrid[0:h, 0:w]
    # pixels outside every search window keep their grid-cell label
    labels = (np.minimum(yy * ny // h, ny - 1) * nx + np.minimum(xx * nx // w, nx - 1)).astype(np.intp)
    spatial = (compactness / step) ** 2
    radius = step
    flat_lab = lab.reshape(-1, 3)

    for _ in range(iterations):
        dist = np.full((h, w), np.inf)
        for k in range(n_centers):
            L, a, b, y, x = centers[k]
            y0, y1 = max(0, int(math.floor(y - radius))), min(h, int(math.ceil(y + radius)) + 1)
            x0, x1 = max(0, int(math.floor(x - radius))), min(w, int(math.ceil(x + radius)) + 1)
            if y0 >= y1 or x0 >= x1:
                continue
            win = lab[y0:y1, x0:x1]
            d = (win[..., 0] - L) ** 2 + (win[..., 1] - a) ** 2 + (win[..., 2] - b) ** 2
            d += spatial * ((yy[y0:y1, x0:x1] - y) ** 2 + (xx[y0:y1, x0:x1] - x) ** 2)
            closer = d < dist[y0:y1, x0:x1]
            dist[y0:y1, x0:x1][closer] = d[closer]
            labels[y0:y1, x0:x1][closer] = k
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=n_centers)
        filled = counts > 0
        sums = np.column_stack(
            [np.bincount(flat, weights=v, minlength=n_centers) for v in (*flat_lab.T, yy.ravel(), xx.ravel())]
        )
        centers[filled] = sums[filled] / counts[filled, None]

    return Superpixels(enforce_connectivity(labels))


def enforce_connectivity(labels: np.ndarray) -> np.ndarray:
    """Keep each label's largest 4-connected component; merge other fragments.

    A fragment joins the largest (by pixel count) element adjacent to it;
    fragments are processed smallest first. Output labels are renumbered
    ``0 .. m-1`` in raster order of first appearance.
    """
    labels = np.asarray(labels)
    comp = np.empty(labels.shape, dtype=np.intp)
    owner = []
    n_comp = 0
    for lab_id, sl in enumerate(ndimage.find_objects(labels + 1)):
        if sl is None:
            continue
        region = labels[sl] == lab_id
        cc, n = ndimage.label(region, structure=_FOUR_CONNECTED)
        comp[sl][region] = cc[region] - 1 + n_comp
        owner.extend([lab_id] * n)
        n_comp += n
    owner = np.asarray(owner)
    sizes = np.bincount(comp.ravel(), minlength=n_comp)

    keep = np.zeros(n_comp, dtype=bool)
    order = np.lexsort((np.arange(n_comp), -sizes, owner))
    first = np.ones(n_comp, dtype=bool)
    first[1:] = owner[order][1:] != owner[order][:-1]
    keep[order[first]] = True
    if keep.all():
        return _renumber(comp)

    neighbours = [set() for _ in range(n_comp)]
    for a, b in ((comp[:, :-1], comp[:, 1:]), (comp[:-1, :], comp[1:, :])):
        diff = a != b
        for u, v in set(zip(a[diff].tolist(), b[diff].tolist())):
            neighbours[u].add(v)
            neighbours[v].add(u)

    parent = np.arange(n_comp)
    group_size = sizes.astype(np.int64).copy()

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    orphans = np.flatnonzero(~keep)
    for o in orphans[np.lexsort((orphans, sizes[orphans]))]:
        root = find(o)
        candidates = {find(n) for n in neighbours[root]} - {root}
        if not candidates:
            continue
        target = max(candidates, key=lambda r: (group_size[r], -r))
        parent[root] = target
        group_size[target] += group_size[root]
        neighbours[target] |= neighbours[root]
    roots = np.array([find(i) for i in range(n_comp)])
    return _renumber(roots[comp])


def _renumber(labels: np.ndarray) -> np.ndarray:
    _, first_idx, inverse = np.unique(labels.ravel(), return_index=True, return_inverse=True)
    rank = np.empty(len(first_idx), dtype=np.intp)
    rank[np.argsort(first_idx, kind="stable")] = np.arange(len(first_idx))
    return rank[inverse].reshape(labels.shape)
