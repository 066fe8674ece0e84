"""
Grayscale image primitives shared by the perceptual reward pipeline.

Images are 2-D float64 numpy arrays indexed ``[row, column]`` with intensities
in [0, 1]. Binary images are uint8 arrays holding only 0 and 1.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import numpy.typing as npt
from numpy.lib.stride_tricks import sliding_window_view

logger = logging.getLogger(__name__)

GrayImage = npt.NDArray[np.float64]
BinaryImage = npt.NDArray[np.uint8]

# Windows whose centred energy falls below this are treated as constant
ZERO_VARIANCE_EPS = 1e-12


class ImageShapeError(ValueError):
    """Raised when images that must share dimensions do not."""


class ParameterError(ValueError):
    """Raised when a numeric parameter falls outside its valid range."""


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle in pixel coordinates (x = column, y = row)."""
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ParameterError(f"Rect extents must be >= 1, got w={self.w}, h={self.h}")

    def inside(self, shape: Tuple[int, int]) -> bool:
        height, width = shape
        return (
            self.x >= 0 and self.y >= 0
            and self.x + self.w <= width
            and self.y + self.h <= height
        )


def as_gray(array) -> GrayImage:
    """Validate an array-like as a GrayImage and return it as float64."""
    img = np.asarray(array, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ImageShapeError(f"Expected a non-empty 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ParameterError("Image contains non-finite intensities")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ParameterError(
            f"Intensities must lie in [0, 1], got range [{img.min()}, {img.max()}]"
        )
    return img


def from_uint8(array) -> GrayImage:
    """Convert 8-bit intensities to the [0, 1] range."""
    return np.asarray(array, dtype=np.float64) / 255.0


def _require_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ImageShapeError(f"Image dimensions differ: {a.shape} vs {b.shape}")


def absdiff(a: GrayImage, b: GrayImage) -> GrayImage:
    """Per-pixel absolute difference."""
    _require_same_shape(a, b)
    return np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))


def binary_threshold(img: GrayImage, thresh: float) -> BinaryImage:
    """1 where ``img > thresh`` (strictly), else 0."""
    if not 0.0 < thresh < 1.0:
        raise ParameterError(f"Threshold must lie in (0, 1), got {thresh}")
    return (np.asarray(img) > thresh).astype(np.uint8)


def silhouette(prev: GrayImage, next_img: GrayImage, thresh: float) -> BinaryImage:
    """Binary image of the pixels that changed between two frames."""
    return binary_threshold(absdiff(prev, next_img), thresh)


def nonzero_bounding_box(img: GrayImage) -> Optional[Rect]:
    """Tightest rectangle around all pixels with intensity > 0, or None if black."""
    rows = np.flatnonzero(np.any(np.asarray(img) > 0, axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(np.any(np.asarray(img) > 0, axis=0))
    return Rect(
        x=int(cols[0]),
        y=int(rows[0]),
        w=int(cols[-1] - cols[0] + 1),
        h=int(rows[-1] - rows[0] + 1),
    )


def grow_to_min_size(rect: Rect, shape: Tuple[int, int], min_size: int = 2) -> Rect:
    """
    Widen a rectangle so each extent is at least ``min_size`` where the
    parent image allows it. Growth extends right/down first, then left/up.
    """
    height, width = shape

    def _grow(start: int, extent: int, limit: int) -> Tuple[int, int]:
        target = min(min_size, limit)
        if extent >= target:
            return start, extent
        end = min(start + target, limit)
        start = max(0, end - target)
        return start, end - start

    x, w = _grow(rect.x, rect.w, width)
    y, h = _grow(rect.y, rect.h, height)
    return Rect(x=x, y=y, w=w, h=h)


def crop(img: GrayImage, r: Rect) -> GrayImage:
    """Copy of the pixels inside ``r``."""
    if not r.inside(np.shape(img)):
        raise ParameterError(f"{r} lies outside image of shape {np.shape(img)}")
    return np.array(img[r.y:r.y + r.h, r.x:r.x + r.w], dtype=np.float64)


def _bilinear_axis(length_in: int, length_out: int):
    """Source indices and weights for half-pixel-centre bilinear sampling."""
    centres = (np.arange(length_out, dtype=np.float64) + 0.5) * (length_in / length_out) - 0.5
    centres = np.clip(centres, 0.0, length_in - 1)
    lo = np.floor(centres).astype(np.int64)
    hi = np.minimum(lo + 1, length_in - 1)
    frac = centres - lo
    return lo, hi, frac


def resize(img: GrayImage, w: int, h: int) -> GrayImage:
    """
    Bilinear resize to ``w`` columns by ``h`` rows.

    Sampling uses half-pixel centres with edge clamping, so a same-size call
    returns the input unchanged and constants stay constant.
    """
    if w < 1 or h < 1:
        raise ParameterError(f"Target size must be at least 1x1, got {w}x{h}")
    src = np.asarray(img, dtype=np.float64)
    if src.shape == (h, w):
        return src.copy()

    row_lo, row_hi, row_frac = _bilinear_axis(src.shape[0], h)
    col_lo, col_hi, col_frac = _bilinear_axis(src.shape[1], w)

    rows = src[row_lo, :] * (1.0 - row_frac)[:, None] + src[row_hi, :] * row_frac[:, None]
    out = rows[:, col_lo] * (1.0 - col_frac)[None, :] + rows[:, col_hi] * col_frac[None, :]
    return np.clip(out, 0.0, 1.0)


def ncc_scores(haystack: GrayImage, needle: GrayImage) -> npt.NDArray[np.float64]:
    """Zero-mean normalized cross-correlation at every valid offset."""
    hay = np.asarray(haystack, dtype=np.float64)
    ndl = np.asarray(needle, dtype=np.float64)
    nh, nw = ndl.shape
    if nh > hay.shape[0] or nw > hay.shape[1]:
        raise ImageShapeError(
            f"Needle {ndl.shape} is larger than haystack {hay.shape}"
        )

    centred_needle = ndl - ndl.mean()
    needle_energy = float(np.sum(centred_needle ** 2))

    windows = sliding_window_view(hay, (nh, nw))
    centred_windows = windows - windows.mean(axis=(2, 3), keepdims=True)
    window_energy = np.sum(centred_windows ** 2, axis=(2, 3))
    numerator = np.einsum("ijkl,kl->ij", centred_windows, centred_needle)

    scores = np.zeros(window_energy.shape, dtype=np.float64)
    if needle_energy <= ZERO_VARIANCE_EPS:
        return scores
    valid = window_energy > ZERO_VARIANCE_EPS
    scores[valid] = numerator[valid] / np.sqrt(window_energy[valid] * needle_energy)
    return np.clip(scores, -1.0, 1.0)


def match_template(haystack: GrayImage, needle: GrayImage) -> Tuple[Rect, float]:
    """
    Slide ``needle`` over ``haystack`` and return the best-correlated window.

    Ties go to the smallest row, then the smallest column.
    """
    scores = ncc_scores(haystack, needle)
    best = int(np.argmax(scores))
    y, x = np.unravel_index(best, scores.shape)
    nh, nw = np.shape(needle)
    return Rect(x=int(x), y=int(y), w=nw, h=nh), float(scores[y, x])
