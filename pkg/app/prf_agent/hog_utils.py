"""
Histogram of Oriented Gradients features for comparing perceptual templates
"""
import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import numpy.typing as npt

from app.prf_agent.imaging_utils import GrayImage, ImageShapeError, ParameterError

logger = logging.getLogger(__name__)

FeatureVector = npt.NDArray[np.float64]


@dataclass(frozen=True)
class HogParams:
    """
    Cell size, orientation bins and the global normalization stabilizer.

    ``norm_eps`` is added to the squared norm before normalizing; 0 gives
    plain L2 normalization.
    """
    cell_size: int = 8
    num_bins: int = 9
    norm_eps: float = 0.0

    def __post_init__(self):
        if self.cell_size < 1:
            raise ParameterError(f"cell_size must be >= 1, got {self.cell_size}")
        if self.num_bins < 2:
            raise ParameterError(f"num_bins must be >= 2, got {self.num_bins}")
        if self.norm_eps < 0:
            raise ParameterError(f"norm_eps must be >= 0, got {self.norm_eps}")

    @property
    def bin_width(self) -> float:
        return 180.0 / self.num_bins


def feature_length(shape: Tuple[int, int], params: HogParams) -> int:
    height, width = shape
    cells_y = math.ceil(height / params.cell_size)
    cells_x = math.ceil(width / params.cell_size)
    return cells_y * cells_x * params.num_bins


def gradients(img: GrayImage) -> Tuple[np.ndarray, np.ndarray]:
    """
    Central-difference gradients with replicated borders.

    Returns:
        (magnitude, orientation) where orientation is in degrees within [0, 180)
    """
    src = np.asarray(img, dtype=np.float64)
    if src.ndim != 2 or src.shape[0] < 2 or src.shape[1] < 2:
        raise ImageShapeError(f"Gradients need an image of at least 2x2, got {src.shape}")

    padded = np.pad(src, 1, mode="edge")
    gx = padded[1:-1, 2:] - padded[1:-1, :-2]
    gy = padded[2:, 1:-1] - padded[:-2, 1:-1]

    magnitude = np.sqrt(gx ** 2 + gy ** 2)
    orientation = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    # mod can round tiny negative angles up to exactly 180
    orientation[orientation >= 180.0] = 0.0
    return magnitude, orientation


def orientation_bins(orientation: np.ndarray, params: HogParams) -> np.ndarray:
    bins = np.floor(orientation / params.bin_width).astype(np.int64)
    return np.minimum(bins, params.num_bins - 1)


def cell_histograms(img: GrayImage, params: HogParams) -> np.ndarray:
    """Unnormalized histograms shaped (cells_y, cells_x, num_bins)."""
    magnitude, orientation = gradients(img)
    height, width = magnitude.shape
    cells_y = math.ceil(height / params.cell_size)
    cells_x = math.ceil(width / params.cell_size)

    cell_row = (np.arange(height) // params.cell_size)[:, None]
    cell_col = (np.arange(width) // params.cell_size)[None, :]
    index = (cell_row * cells_x + cell_col) * params.num_bins + orientation_bins(orientation, params)

    flat = np.bincount(
        index.ravel(),
        weights=magnitude.ravel(),
        minlength=cells_y * cells_x * params.num_bins,
    )
    return flat.reshape(cells_y, cells_x, params.num_bins)


def normalize(values: np.ndarray, norm_eps: float = 0.0) -> FeatureVector:
    squared = float(np.dot(values, values))
    if squared == 0.0:
        return np.zeros_like(values)
    return values / math.sqrt(squared + norm_eps)


def hog_features(img: GrayImage, params: HogParams) -> FeatureVector:
    """Row-major cell histograms, concatenated and globally normalized."""
    return normalize(cell_histograms(img, params).ravel(), params.norm_eps)


def hog_glyph(
    features: FeatureVector,
    image_shape: Tuple[int, int],
    params: HogParams,
    cell_px: int = 16,
) -> GrayImage:
    """
    Render features as one star of line segments per cell.

    Each bin draws a segment through the cell centre perpendicular to its
    gradient direction, i.e. along the edge it votes for.
    """
    height, width = image_shape
    cells_y = math.ceil(height / params.cell_size)
    cells_x = math.ceil(width / params.cell_size)
    hist = np.asarray(features, dtype=np.float64).reshape(cells_y, cells_x, params.num_bins)

    glyph = np.zeros((cells_y * cell_px, cells_x * cell_px), dtype=np.float64)
    peak = hist.max() if hist.size else 0.0
    if peak <= 0:
        return glyph

    radius = (cell_px - 1) / 2.0
    steps = np.linspace(-radius, radius, 2 * cell_px)
    for b in range(params.num_bins):
        edge_angle = math.radians((b + 0.5) * params.bin_width + 90.0)
        dx = np.cos(edge_angle) * steps
        dy = -np.sin(edge_angle) * steps
        for cy, cx in zip(*np.nonzero(hist[:, :, b] > 0)):
            centre_y = cy * cell_px + radius
            centre_x = cx * cell_px + radius
            rows = np.clip(np.rint(centre_y + dy).astype(np.int64), 0, glyph.shape[0] - 1)
            cols = np.clip(np.rint(centre_x + dx).astype(np.int64), 0, glyph.shape[1] - 1)
            value = hist[cy, cx, b] / peak
            glyph[rows, cols] = np.maximum(glyph[rows, cols], value)
    return glyph
