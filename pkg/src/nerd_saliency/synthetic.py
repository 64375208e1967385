"""Generated test corpus: one textured square on a flat background per image."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import _random
from .imaging import save_gray, save_image


def textured_square(size=128, square=32, seed=0, center=False):
    """Return ``(image, mask)`` with a striped square on a flat background.

    The square carries a sinusoidal grating of random orientation and period
    between two random colours; the background is one flat colour.
    """
    rng = _random.stage_rng(seed, _random.CORPUS)
    background = rng.uniform(0.3, 0.7, size=3)
    c0, c1 = rng.uniform(0.0, 1.0, size=(2, 3))
    if center:
        top = left = (size - square) // 2
    else:
        top, left = rng.integers(square // 2, size - square - square // 2 + 1, size=2)
    theta = rng.uniform(0, np.pi)
    period = rng.uniform(4.0, 8.0)
    yy, xx = np.mgrid[0:square, 0:square]
    phase = 2 * np.pi * (xx * np.cos(theta) + yy * np.sin(theta)) / period
    t = (0.5 + 0.5 * np.sin(phase))[..., None]
    img = np.empty((size, size, 3))
    img[:] = background
    img[top : top + square, left : left + square] = c0 + t * (c1 - c0)
    mask = np.zeros((size, size), dtype=bool)
    mask[top : top + square, left : left + square] = True
    return img, mask


def write_corpus(directory, n_images=20, size=128, square=32, seed=0):
    """Write ``images/`` and ``masks/`` PNG pairs named ``img_XXX.png``."""
    directory = Path(directory)
    (directory / "images").mkdir(parents=True, exist_ok=True)
    (directory / "masks").mkdir(parents=True, exist_ok=True)
    for i in range(n_images):
        img, mask = textured_square(size, square, seed=seed * 100003 + i)
        name = f"img_{i:03d}.png"
        save_image(img, directory / "images" / name)
        save_gray(mask.astype(np.float64), directory / "masks" / name)
    return directory / "images", directory / "masks"
