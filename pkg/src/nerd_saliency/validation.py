"""Input validation helpers shared by the estimators and the functional API."""

from numbers import Integral, Real

import numpy as np


def check_image(img, name="img", allow_gray=True):
    """Validate an image array and return it as float64 ``(H, W, C)``.

    Accepts ``(H, W)`` grayscale (promoted to one channel) or ``(H, W, 1|3)``.
    Values must be finite and inside [0, 1].
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"{name} must have shape (H, W), (H, W, 1) or (H, W, 3); got {arr.shape}")
    if arr.shape[2] == 1 and not allow_gray:
        raise ValueError(f"{name} must have 3 channels")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return arr


def as_rgb(img):
    """Replicate a single-channel image to three channels."""
    img = check_image(img)
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    return img


def check_probability(p, name="p"):
    if not isinstance(p, Real) or not 0.0 <= float(p) <= 1.0:
        raise ValueError(f"{name} must be a probability in [0, 1], got {p!r}")
    return float(p)


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_atom_counts(counts, name="atom_counts"):
    counts = tuple(counts)
    if not counts:
        raise ValueError(f"{name} must be non-empty")
    for c in counts:
        check_positive_int(c, name)
    if any(b <= a for a, b in zip(counts, counts[1:])):
        raise ValueError(f"{name} must be strictly increasing, got {counts}")
    return tuple(int(c) for c in counts)


def check_same_shape(a_shape, b_shape, what):
    if tuple(a_shape) != tuple(b_shape):
        raise ValueError(f"{what}: shape mismatch {tuple(a_shape)} vs {tuple(b_shape)}")
