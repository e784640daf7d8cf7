"""Benchmark data: IDX image ingestion, synthetic images, and the pixel cost.

Images become histograms by flattening in row-major order, adding a uniform
floor of 1e-6 (the solvers' theory wants strictly positive marginals and
handwritten-digit images are mostly zeros), and normalizing to unit mass.
The cost between two pixels is the Euclidean distance of their grid
positions.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import IdxFormatError
from .validation import as_float_matrix

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# Uniform intensity floor applied before normalization.
PIXEL_FLOOR = 1e-6


@dataclass(frozen=True)
class ImageHistogram:
    """A probability vector over the m x m pixel grid, row-major."""

    pixels: np.ndarray
    side: int

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 1 or pixels.size != self.side * self.side:
            raise ValueError(f"expected {self.side * self.side} pixels, got shape {pixels.shape}")
        if abs(pixels.sum() - 1.0) > 1e-12:
            raise ValueError("histogram must be normalized to unit mass")
        pixels = pixels.copy()
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @classmethod
    def from_image(cls, image, floor=PIXEL_FLOOR):
        """Floor and normalize a nonnegative 2-D intensity array."""
        image = as_float_matrix(image, "image")
        if image.shape[0] != image.shape[1]:
            raise ValueError(f"image must be square, got {image.shape}")
        if np.any(image < 0):
            raise ValueError("image intensities must be nonnegative")
        flat = image.ravel() + floor
        mass = flat.sum()
        if mass <= 0:
            raise ValueError("image has no mass")
        return cls(flat / mass, image.shape[0])


def read_idx_images(path):
    """Parse a big-endian IDX3 image file into a (count, rows, cols) uint8 array."""
    with open(path, "rb") as handle:
        header = handle.read(16)
        if len(header) < 16:
            raise IdxFormatError(f"{path}: truncated IDX header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGES_MAGIC:
            raise IdxFormatError(f"{path}: bad magic number {magic:#010x}")
        payload = handle.read(count * rows * cols)
    if len(payload) != count * rows * cols:
        raise IdxFormatError(
            f"{path}: truncated payload, expected {count * rows * cols} bytes, got {len(payload)}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)


def resample_image(image, side):
    """Resize a square intensity grid: integer block averaging, then center crop/pad.

    The largest integer shrink factor is applied first; any remaining size
    mismatch is fixed by symmetric zero padding or center cropping. Flooring
    and normalization happen afterwards, so padding cannot reintroduce zero
    marginals.
    """
    image = as_float_matrix(image, "image")
    src = image.shape[0]
    if side < 1:
        raise ValueError("target side must be positive")
    # Nearest integer shrink: 28 -> 16 averages 2x2 down to 14 and pads.
    factor = max(1, round(src / side))
    if factor > 1:
        trimmed = image[: (src // factor) * factor, : (src // factor) * factor]
        blocks = trimmed.reshape(src // factor, factor, src // factor, factor)
        image = blocks.mean(axis=(1, 3))
    cur = image.shape[0]
    if cur < side:
        pad_lo = (side - cur) // 2
        pad_hi = side - cur - pad_lo
        image = np.pad(image, ((pad_lo, pad_hi), (pad_lo, pad_hi)))
    elif cur > side:
        lo = (cur - side) // 2
        image = image[lo : lo + side, lo : lo + side]
    return image


def load_mnist(images_path, count, seed, side=None):
    """Sample `count` images uniformly from an IDX3 file as positive histograms.

    ``side`` optionally resizes the raw images before flooring; ``None`` keeps
    the native resolution.
    """
    images = read_idx_images(images_path)
    if count > images.shape[0]:
        raise ValueError(f"requested {count} images but the file holds {images.shape[0]}")
    if images.shape[1] != images.shape[2]:
        raise IdxFormatError(f"{images_path}: images are not square: {images.shape[1:]} ")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(images.shape[0], size=count, replace=False)
    out = []
    for idx in chosen:
        raw = images[idx].astype(np.float64)
        if side is not None:
            raw = resample_image(raw, side)
        out.append(ImageHistogram.from_image(raw))
    return out


def synthetic_images(count, side, foreground_fraction=0.2, seed=0):
    """Random sparse images: a uniform subset of pixels gets uniform intensities.

    Each image picks ceil(foreground_fraction * side^2) distinct foreground
    pixels with intensities drawn uniformly from (0, 1]; background pixels sit
    at the 1e-6 floor before normalization. Fixed seeds give identical output.
    """
    if side < 2:
        raise ValueError("side must be at least 2")
    if not (0 < foreground_fraction <= 1):
        raise ValueError("foreground_fraction must lie in (0, 1]")
    if count < 1:
        raise ValueError("count must be positive")
    n_pixels = side * side
    n_foreground = int(np.ceil(foreground_fraction * n_pixels))
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        image = np.full(n_pixels, PIXEL_FLOOR)
        chosen = rng.choice(n_pixels, size=n_foreground, replace=False)
        image[chosen] = 1.0 - rng.random(n_foreground)  # uniform on (0, 1]
        out.append(ImageHistogram(image / image.sum(), side))
    return out


def pixel_cost(side):
    """Euclidean distances between pixel positions of a side x side grid.

    Row-major flattening; symmetric with zero diagonal, and the largest entry
    is the corner-to-corner distance sqrt(2) * (side - 1).
    """
    if side < 1:
        raise ValueError("side must be positive")
    coords = np.indices((side, side)).reshape(2, -1).T.astype(np.float64)
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2))
