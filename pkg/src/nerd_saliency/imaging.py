"""Image I/O (PNG, binary PGM/PPM), sRGB to CIELAB conversion and map export.

Images are ``float64`` arrays of shape ``(H, W, C)`` with ``C`` in {1, 3} and
values in [0, 1]. An 8-bit sample ``v`` is stored as ``v / 255``.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from .validation import check_image

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

# sRGB (D65) -> XYZ, and the D65 reference white it implies.
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])


class ImageFormatError(ValueError):
    """Base class for decoding failures."""


class UnsupportedFormatError(ImageFormatError):
    """The file is not PNG, binary PGM (P5) or binary PPM (P6)."""


class CorruptImageError(ImageFormatError):
    """The file claims a supported format but its header or payload is invalid."""


def load_image(path) -> np.ndarray:
    """Read a PNG or binary PGM/PPM file into a float image in [0, 1].

    Raises:
        FileNotFoundError: ``path`` does not exist.
        UnsupportedFormatError: the magic bytes match no supported format.
        CorruptImageError: the header or payload is malformed.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    data = path.read_bytes()
    if data.startswith(PNG_SIGNATURE):
        return _decode_png(data, path)
    if data[:2] in (b"P5", b"P6"):
        return _decode_pnm(data, path)
    raise UnsupportedFormatError(f"{path}: unsupported image format (expected PNG, P5 or P6)")


def _decode_png(data: bytes, path: Path) -> np.ndarray:
    try:
        with PILImage.open(io.BytesIO(data)) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=np.float64) / 65535.0
                return arr[:, :, None]
            if mode in ("1", "L"):
                arr = np.asarray(im.convert("L"), dtype=np.float64)[:, :, None]
            elif mode == "LA":
                arr = np.asarray(im.convert("L"), dtype=np.float64)[:, :, None]
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise CorruptImageError(f"{path}: corrupt PNG ({exc})") from exc
    return arr / 255.0


def _pnm_tokens(data: bytes, count: int):
    """Parse ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise CorruptImageError("truncated header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    if pos >= n or not data[pos : pos + 1].isspace():
        raise CorruptImageError("missing whitespace after header")
    return tokens, pos + 1


def _decode_pnm(data: bytes, path: Path) -> np.ndarray:
    try:
        tokens, offset = _pnm_tokens(data, 4)
        magic = tokens[0]
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise CorruptImageError(f"{path}: corrupt PNM header ({exc})") from exc
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormatError(f"{path}: unsupported PNM variant {magic!r}")
    if width < 1 or height < 1 or not 1 <= maxval <= 65535:
        raise CorruptImageError(f"{path}: invalid PNM dimensions or maxval")
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * channels * dtype.itemsize
    payload = data[offset : offset + expected]
    if len(payload) != expected:
        raise CorruptImageError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    arr = np.frombuffer(payload, dtype=dtype).reshape(height, width, channels)
    if arr.max(initial=0) > maxval:
        raise CorruptImageError(f"{path}: sample exceeds maxval {maxval}")
    return arr.astype(np.float64) / float(maxval)


def rgb_to_lab(img) -> np.ndarray:
    """Convert an sRGB image (D65) to CIELAB, pixel by pixel.

    Returns an ``(H, W, 3)`` array of ``(L, a, b)`` with ``L`` in [0, 100].
    """
    img = check_image(img, allow_gray=False)
    c = img
    linear = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _RGB_TO_XYZ.T / _WHITE_D65
    delta = 6.0 / 29.0
    f = np.where(xyz > delta**3, np.cbrt(xyz), xyz / (3 * delta**2) + 4.0 / 29.0)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def to_bytes(values) -> np.ndarray:
    """Quantize values in [0, 1] to uint8 via ``round(v * 255)``, halves rounding up."""
    values = np.asarray(values, dtype=np.float64)
    if values.size and (not np.all(np.isfinite(values)) or values.min() < 0 or values.max() > 1):
        raise ValueError("map values must be finite and lie in [0, 1]")
    return np.floor(values * 255.0 + 0.5).astype(np.uint8)


def save_gray(saliency, path) -> None:
    """Write a 2-D map in [0, 1] as an 8-bit grayscale PNG or PGM (by suffix)."""
    saliency = np.asarray(saliency)
    if saliency.ndim == 3 and saliency.shape[2] == 1:
        saliency = saliency[:, :, 0]
    if saliency.ndim != 2:
        raise ValueError(f"expected a 2-D map, got shape {saliency.shape}")
    _write_raster(to_bytes(saliency), path)


def save_image(img, path) -> None:
    """Write a float image (gray or RGB) as 8-bit PNG/PGM/PPM."""
    img = check_image(img)
    raster = to_bytes(img)
    _write_raster(raster[:, :, 0] if raster.shape[2] == 1 else raster, path)


def save_label_pgm(labels, path) -> None:
    """Debug export of a label map as a 16-bit binary PGM."""
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.min(initial=0) < 0 or labels.max(initial=0) > 65535:
        raise ValueError("labels must be a 2-D map of values in [0, 65535]")
    h, w = labels.shape
    header = f"P5\n{w} {h}\n65535\n".encode()
    with open(path, "wb") as fh:
        fh.write(header + labels.astype(">u2").tobytes())


def _write_raster(raster: np.ndarray, path) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        PILImage.fromarray(raster).save(path, format="PNG")
    elif suffix in (".pgm", ".ppm"):
        if raster.ndim == 2:
            magic = b"P5"
        elif suffix == ".ppm":
            magic = b"P6"
        else:
            raise ValueError("a PGM file holds a single channel")
        h, w = raster.shape[:2]
        with open(path, "wb") as fh:
            fh.write(magic + f"\n{w} {h}\n255\n".encode() + raster.tobytes())
    else:
        raise ValueError(f"unsupported output format {suffix!r}; use .png, .pgm or .ppm")


def list_images(directory) -> list[Path]:
    """Sorted list of readable image files (by extension) in ``directory``."""
    exts = {".png", ".pgm", ".ppm", ".pnm"}
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in exts and p.is_file())


__all__ = [
    "CorruptImageError",
    "ImageFormatError",
    "UnsupportedFormatError",
    "list_images",
    "load_image",
    "rgb_to_lab",
    "save_gray",
    "save_image",
    "save_label_pgm",
    "to_bytes",
]
