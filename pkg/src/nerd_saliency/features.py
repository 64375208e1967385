"""First processing block of a sparsely connected convolutional network.

A filter bank holds ``l`` receptive fields of shape ``(c, kh, kw)`` plus a
binary per-synapse connectivity mask. The forward block is

    masked convolution -> half-wave rectifier -> cross-channel LRN -> max-pool

and its low-resolution output is resampled back to one response vector per
pixel. The convolution visits synapses one at a time and only touches the
filters whose mask keeps that synapse, so cost scales with the mask density.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _random
from .validation import as_rgb, check_positive_int, check_probability

FB_MAGIC = b"NERDFB1"


class FilterBankFormatError(ValueError):
    """Malformed NERD-FB file."""


@dataclass(frozen=True, eq=False)
class FilterBank:
    """Receptive fields with their connectivity mask.

    Attributes:
        weights: float32 array ``(l, c, kh, kw)``.
        biases: float32 array ``(l,)``.
        mask: bool array shaped like ``weights``; ``True`` keeps a synapse.
        connectivity: the probability the mask was drawn with.
        seed: seed the mask was drawn from.
    """

    weights: np.ndarray
    biases: np.ndarray
    mask: np.ndarray
    connectivity: float = 1.0
    seed: int = 0
    _active: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float32)
        b = np.ascontiguousarray(self.biases, dtype=np.float32)
        m = np.ascontiguousarray(self.mask, dtype=bool)
        if w.ndim != 4:
            raise ValueError(f"weights must be 4-D (l, c, kh, kw), got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValueError(f"biases must have shape ({w.shape[0]},), got {b.shape}")
        if m.shape != w.shape:
            raise ValueError(f"mask shape {m.shape} does not match weights {w.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("filter bank contains non-finite values")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)
        object.__setattr__(self, "mask", m)
        # per-synapse list of filters that keep it, in (c, dy, dx) order
        flat = m.reshape(m.shape[0], -1).T
        object.__setattr__(self, "_active", [np.flatnonzero(col) for col in flat])

    @property
    def count(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_size(self) -> tuple[int, int]:
        return self.weights.shape[2], self.weights.shape[3]

    @property
    def effective_weights(self) -> np.ndarray:
        return self.weights * self.mask

    @property
    def density(self) -> float:
        return float(self.mask.mean()) if self.mask.size else 0.0

    def with_connectivity(self, p: float, seed: int | None = None) -> "FilterBank":
        """Same weights, fresh mask drawn at connectivity ``p``."""
        seed = self.seed if seed is None else seed
        mask = generate_connectivity_mask(self.weights.shape, p, seed)
        return replace(self, mask=mask, connectivity=float(p), seed=int(seed))

    def premasked(self) -> "FilterBank":
        """Dense bank whose weights are pre-multiplied by this bank's mask."""
        return FilterBank(
            self.effective_weights, self.biases, np.ones_like(self.mask), connectivity=1.0, seed=self.seed
        )


@dataclass(frozen=True)
class BlockConfig:
    """Geometry of the processing block.

    Defaults follow the AlexNet conv1 block: stride 4, LRN (n=5, k=2,
    alpha=1e-4, beta=0.75), 3x3 max-pool with stride 2. ``lrn_alpha=0``
    disables normalization. ``padding`` is ``"edge"`` (replicate border
    pixels) or ``"zero"``.
    """

    stride: int = 4
    lrn_size: int = 5
    lrn_k: float = 2.0
    lrn_alpha: float = 1e-4
    lrn_beta: float = 0.75
    pool_size: int = 3
    pool_stride: int = 2
    padding: str = "edge"

    def __post_init__(self):
        check_positive_int(self.stride, "stride")
        check_positive_int(self.pool_size, "pool_size")
        check_positive_int(self.pool_stride, "pool_stride")
        check_positive_int(self.lrn_size, "lrn_size")
        if self.lrn_size % 2 == 0:
            raise ValueError(f"lrn_size must be odd, got {self.lrn_size}")
        if self.lrn_alpha < 0 or self.lrn_k < 0 or self.lrn_beta < 0:
            raise ValueError("LRN parameters must be non-negative")
        if self.padding not in ("edge", "zero"):
            raise ValueError(f"padding must be 'edge' or 'zero', got {self.padding!r}")


def generate_connectivity_mask(shape, p: float, seed: int) -> np.ndarray:
    """Keep each synapse independently with probability ``p``.

    The draw is a pure function of ``(shape, p, seed)``.
    """
    p = check_probability(p)
    shape = tuple(int(s) for s in shape)
    if any(s < 0 for s in shape):
        raise ValueError(f"invalid mask shape {shape}")
    return _random.stage_rng(seed, _random.MASK).random(shape) < p


def _gabor_kernel(size, theta, wavelength, phase, sigma, gamma=0.5):
    half = size // 2
    y, x = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    xr = x * np.cos(theta) + y * np.sin(theta)
    yr = -x * np.sin(theta) + y * np.cos(theta)
    envelope = np.exp(-0.5 * (xr**2 + (gamma * yr) ** 2) / sigma**2)
    return envelope * np.cos(2.0 * np.pi * xr / wavelength + phase)


_COLOR_AXES = np.array(
    [
        [1.0, 1.0, 1.0],  # luminance
        [1.0, -1.0, 0.0],  # red-green
        [1.0, 1.0, -2.0],  # blue-yellow
    ]
)


def _gabor_weights(count, channels, kh, kw, n_orient=8):
    if kh != kw or kh % 2 == 0 or kh < 3:
        raise ValueError(f"gabor kernels must be square with odd size >= 3, got {kh}x{kw}")
    wavelengths = np.maximum(2.0, kh * np.array([0.25, 0.4, 0.625]))
    phases = (0.0, np.pi / 2)
    colors = _COLOR_AXES if channels == 3 else np.ones((1, channels))
    weights = np.empty((count, channels, kh, kw))
    for i in range(count):
        # mixed radix: orientation varies fastest, then scale, phase, colour
        o, rest = i % n_orient, i // n_orient
        s, rest = rest % len(wavelengths), rest // len(wavelengths)
        ph, rest = rest % len(phases), rest // len(phases)
        col = colors[rest % len(colors)]
        lam = wavelengths[s]
        g = _gabor_kernel(kh, np.pi * o / n_orient, lam, phases[ph], sigma=0.56 * lam)
        g -= g.mean()
        f = col[:, None, None] * g[None]
        f -= f.mean()
        weights[i] = f / np.linalg.norm(f)
    return weights


def generate_filter_bank(
    count: int = 96,
    kernel_size=11,
    kind: str = "gabor",
    p: float = 0.25,
    seed: int = 0,
    in_channels: int = 3,
) -> FilterBank:
    """Procedural filter bank.

    ``kind="gabor"`` gives zero-mean, unit-norm oriented band-pass filters
    (8 orientations, 3 wavelengths, 2 phases, cycling through luminance and
    two colour-opponent axes). ``kind="random"`` draws He-normal weights with
    variance ``2 / (c * kh * kw)``. Biases are zero.
    """
    count = check_positive_int(count, "count")
    in_channels = check_positive_int(in_channels, "in_channels")
    kh, kw = (kernel_size, kernel_size) if np.isscalar(kernel_size) else kernel_size
    kh = check_positive_int(kh, "kernel height")
    kw = check_positive_int(kw, "kernel width")
    shape = (count, in_channels, kh, kw)
    if kind == "gabor":
        weights = _gabor_weights(count, in_channels, kh, kw)
    elif kind == "random":
        std = np.sqrt(2.0 / (in_channels * kh * kw))
        weights = _random.stage_rng(seed, _random.WEIGHTS).normal(0.0, std, size=shape)
    else:
        raise ValueError(f"unknown filter kind {kind!r}; expected 'gabor' or 'random'")
    mask = generate_connectivity_mask(shape, p, seed)
    return FilterBank(weights, np.zeros(count), mask, connectivity=float(p), seed=int(seed))


def export_filter_bank(bank: FilterBank, path) -> None:
    """Write weights and biases in NERD-FB format (masks are never stored)."""
    l, c, kh, kw = bank.weights.shape
    with open(path, "wb") as fh:
        fh.write(FB_MAGIC + b"\n")
        fh.write(f"{l} {c} {kh} {kw}\n".encode("ascii"))
        fh.write(bank.weights.astype("<f4").tobytes())
        fh.write(bank.biases.astype("<f4").tobytes())


def import_filter_bank(path, p: float = 0.25, seed: int = 0) -> FilterBank:
    """Load a NERD-FB file and draw its mask at connectivity ``p``."""
    data = Path(path).read_bytes()
    first, sep, rest = data.partition(b"\n")
    if first.rstrip(b"\r") != FB_MAGIC or not sep:
        raise FilterBankFormatError(f"{path}: bad magic, expected {FB_MAGIC.decode()}")
    dims_line, sep, payload = rest.partition(b"\n")
    match = re.fullmatch(rb"\s*(\d+)\s+(\d+)\s+(\d+)\s+(\d+)\s*", dims_line)
    if not sep or match is None:
        raise FilterBankFormatError(f"{path}: dimension line must be 'l c kh kw'")
    l, c, kh, kw = (int(v) for v in match.groups())
    if min(l, c, kh, kw) < 1:
        raise FilterBankFormatError(f"{path}: dimensions must be positive, got {l} {c} {kh} {kw}")
    n_weights = l * c * kh * kw
    expected = 4 * (n_weights + l)
    if len(payload) != expected:
        raise FilterBankFormatError(f"{path}: payload size {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<f4")
    if not np.all(np.isfinite(values)):
        raise FilterBankFormatError(f"{path}: non-finite values in payload")
    weights = values[:n_weights].reshape(l, c, kh, kw).astype(np.float32)
    biases = values[n_weights:].astype(np.float32)
    mask = generate_connectivity_mask(weights.shape, p, seed)
    return FilterBank(weights, biases, mask, connectivity=float(p), seed=int(seed))


def conv_output_shape(height, width, bank: FilterBank, stride: int) -> tuple[int, int]:
    kh, kw = bank.kernel_size
    return (height + 2 * (kh // 2) - kh) // stride + 1, (width + 2 * (kw // 2) - kw) // stride + 1


def mac_counts(bank: FilterBank, height: int, width: int, stride: int) -> tuple[int, int]:
    """``(actual, dense)`` multiply-accumulate counts of one convolution."""
    ho, wo = conv_output_shape(height, width, bank, stride)
    positions = ho * wo
    return int(bank.mask.sum()) * positions, bank.weights.size * positions


def sparse_conv(img, bank: FilterBank, stride: int = 1, padding: str = "edge") -> np.ndarray:
    """Masked convolution with half-kernel padding; returns float32 ``(l, Ho, Wo)``.

    Masked synapses are skipped, never multiplied by zero. Each output value
    accumulates ``bias`` then the kept synapses in ``(c, dy, dx)`` order, so a
    masked bank and its pre-masked dense twin agree bit for bit.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise ValueError(f"image must be (H, W) or (H, W, C), got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    if img.shape[2] == 1 and bank.in_channels == 3:
        img = np.repeat(img, 3, axis=2)
    h, w, c = img.shape
    if c != bank.in_channels:
        raise ValueError(f"image has {c} channels, filter bank expects {bank.in_channels}")
    kh, kw = bank.kernel_size
    if h < kh or w < kw:
        raise ValueError(f"image {h}x{w} is smaller than the {kh}x{kw} kernel")
    ph, pw = kh // 2, kw // 2
    x = np.ascontiguousarray(img.transpose(2, 0, 1), dtype=np.float32)
    mode = "edge" if padding == "edge" else "constant"
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)), mode=mode)
    ho, wo = conv_output_shape(h, w, bank, stride)
    out = np.empty((bank.count, ho, wo), dtype=np.float32)
    out[:] = bank.biases[:, None, None]
    wflat = bank.weights.reshape(bank.count, -1)
    l = bank.count
    for s, active in enumerate(bank._active):
        if active.size == 0:
            continue
        ci, rem = divmod(s, kh * kw)
        dy, dx = divmod(rem, kw)
        patch = xp[ci, dy : dy + stride * (ho - 1) + 1 : stride, dx : dx + stride * (wo - 1) + 1 : stride]
        if active.size == l:
            out += wflat[:, s, None, None] * patch
        else:
            out[active] += wflat[active, s, None, None] * patch
    return out


def rectify(x: np.ndarray) -> np.ndarray:
    """Half-wave rectifier ``max(0, x)``."""
    return np.maximum(x, 0, dtype=x.dtype)


def local_response_norm(x: np.ndarray, size=5, k=2.0, alpha=1e-4, beta=0.75) -> np.ndarray:
    """Cross-channel LRN: ``x_i / (k + alpha * sum_{|j-i|<=size//2} x_j^2) ** beta``.

    ``alpha == 0`` returns ``x`` unchanged.
    """
    if alpha == 0:
        return x
    half = size // 2
    sq = np.square(x, dtype=np.float64)
    csum = np.concatenate([np.zeros((1,) + sq.shape[1:]), np.cumsum(sq, axis=0)])
    n = x.shape[0]
    hi = np.minimum(np.arange(n) + half + 1, n)
    lo = np.maximum(np.arange(n) - half, 0)
    window = csum[hi] - csum[lo]
    return (x / (k + alpha * window) ** beta).astype(x.dtype)


def max_pool(x: np.ndarray, size=3, stride=2) -> np.ndarray:
    """Max-pool ``(l, H, W)`` without padding; windows shrink to fit tiny inputs."""
    _, h, w = x.shape
    sy, sx = min(size, h), min(size, w)
    ho, wo = (h - sy) // stride + 1, (w - sx) // stride + 1
    out = None
    for dy in range(sy):
        for dx in range(sx):
            v = x[:, dy : dy + stride * (ho - 1) + 1 : stride, dx : dx + stride * (wo - 1) + 1 : stride]
            out = v.copy() if out is None else np.maximum(out, v, out=out)
    return out


def forward_block(img, bank: FilterBank, cfg: BlockConfig | None = None) -> np.ndarray:
    """Run convolution, rectifier, LRN and pooling; returns ``(l, Hp, Wp)``."""
    cfg = cfg or BlockConfig()
    x = sparse_conv(img, bank, cfg.stride, cfg.padding)
    x = rectify(x)
    x = local_response_norm(x, cfg.lrn_size, cfg.lrn_k, cfg.lrn_alpha, cfg.lrn_beta)
    return max_pool(x, cfg.pool_size, cfg.pool_stride)


def _interp_axis(x: np.ndarray, n_out: int, axis: int, origin=None, step=None) -> np.ndarray:
    n_in = x.shape[axis]
    if origin is None:
        if n_in == n_out:
            return x
        # half-pixel centres: stretch the source grid over the output
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    else:
        src = (np.arange(n_out) - origin) / step
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    t = src - i0
    shape = [1] * x.ndim
    shape[axis] = n_out
    t = t.reshape(shape)
    a = np.take(x, i0, axis=axis)
    b = np.take(x, i1, axis=axis)
    # a + t*(b-a) is exact wherever a == b, keeping flat regions bit-constant
    return a + t * (b - a)


def upsample_features(responses: np.ndarray, width: int, height: int, grid=None) -> np.ndarray:
    """Bilinear resampling of ``(l, h, w)`` responses to ``(height, width, l)``.

    Without ``grid`` the source cells are stretched over the output with
    half-pixel centres. ``grid=(origin_y, origin_x, step_y, step_x)`` instead
    places source cell ``(i, j)`` at pixel ``(origin_y + i*step_y,
    origin_x + j*step_x)``; pixels beyond the outermost cells take the edge value.
    """
    r = np.asarray(responses, dtype=np.float64)
    if r.ndim != 3:
        raise ValueError(f"responses must be (l, h, w), got shape {r.shape}")
    oy, ox, sy, sx = grid if grid is not None else (None, None, None, None)
    r = _interp_axis(r, height, 1, oy, sy)
    r = _interp_axis(r, width, 2, ox, sx)
    return np.ascontiguousarray(r.transpose(1, 2, 0))


def block_grid(height, width, bank: FilterBank, cfg: BlockConfig):
    """Pixel position of pooled cell (0, 0) and the pixel spacing between cells.

    Convolution output ``i`` is centred on pixel ``i * stride``; a pooling
    window starting at conv index ``j * pool_stride`` is centred half a window
    further on.
    """
    ho, wo = conv_output_shape(height, width, bank, cfg.stride)
    py, px = min(cfg.pool_size, ho), min(cfg.pool_size, wo)
    step = cfg.stride * cfg.pool_stride
    return cfg.stride * (py - 1) / 2, cfg.stride * (px - 1) / 2, step, step


def pixel_features(img, bank: FilterBank, cfg: BlockConfig | None = None) -> np.ndarray:
    """Per-pixel neural responses ``(H, W, l)`` at the source resolution."""
    cfg = cfg or BlockConfig()
    img = as_rgb(img)
    h, w = img.shape[:2]
    return upsample_features(forward_block(img, bank, cfg), w, h, block_grid(h, w, bank, cfg))
