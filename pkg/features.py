"""
Fixed-length image descriptors: color histogram, HOG, dense DAISY and
their concatenation.

Every extractor is a pure function of (image, FeatureConfig), so extraction
over distinct images can run concurrently.
"""

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray
from scipy.ndimage import gaussian_filter

from config import Config
from errors import (
    DimensionNotDivisibleError,
    EmptyInputError,
    FeatureError,
    InvalidConfigError,
    RadiusTooLargeError,
)
from imgio import ImageGray, ImageRGB, resize_bilinear, to_grayscale

logger = logging.getLogger(__name__)

NORM_EPS = 1e-6


class FeatureKind(str, Enum):
    HIST = "hist"
    HOG = "hog"
    DAISY = "daisy"
    ALL = "all"


# Concatenation order for FeatureKind.ALL
PART_ORDER = (FeatureKind.HIST, FeatureKind.HOG, FeatureKind.DAISY)


@dataclass(frozen=True)
class FeatureConfig:
    """Extractor parameters. Immutable; validated on construction."""

    canonical_size: int = field(default_factory=lambda: Config.CANONICAL_SIZE)
    hist_bins: int = 32
    hog_cell: int = 8
    hog_block: int = 2
    hog_orientations: int = 9
    daisy_step: int = 16
    daisy_radius: float = 15
    daisy_rings: int = 3
    daisy_histograms: int = 8
    daisy_orientations: int = 8

    def __post_init__(self):
        counts = {
            "canonical_size": self.canonical_size,
            "hist_bins": self.hist_bins,
            "hog_cell": self.hog_cell,
            "hog_block": self.hog_block,
            "hog_orientations": self.hog_orientations,
            "daisy_step": self.daisy_step,
            "daisy_rings": self.daisy_rings,
            "daisy_histograms": self.daisy_histograms,
            "daisy_orientations": self.daisy_orientations,
        }
        for name, value in counts.items():
            if int(value) != value or value < 1:
                raise InvalidConfigError(f"{name} must be a positive integer, got {value}")
        if self.canonical_size % self.hog_cell != 0:
            raise InvalidConfigError(
                f"canonical_size {self.canonical_size} is not divisible by hog_cell {self.hog_cell}"
            )
        if self.canonical_size // self.hog_cell < self.hog_block:
            raise InvalidConfigError("hog_block spans more cells than the canonical image holds")
        if not 0 < self.daisy_radius < self.canonical_size / 2:
            raise InvalidConfigError(
                f"daisy_radius must lie in (0, {self.canonical_size / 2}), got {self.daisy_radius}"
            )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FeatureConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfigError(f"unknown feature config keys: {sorted(unknown)}")
        return cls(**data)

    def fingerprint(self) -> str:
        """SHA-256 of the canonical JSON form."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """A descriptor tagged with the extractor that produced it."""

    kind: FeatureKind
    values: NDArray[np.float64]

    def __post_init__(self):
        kind = FeatureKind(self.kind)
        values = np.array(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(values)):
            raise FeatureError(f"{kind.value} descriptor contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


# Dimensions

def hog_dim(cfg: FeatureConfig, width: Optional[int] = None, height: Optional[int] = None) -> int:
    cells_x = (width or cfg.canonical_size) // cfg.hog_cell
    cells_y = (height or cfg.canonical_size) // cfg.hog_cell
    blocks = (cells_x - cfg.hog_block + 1) * (cells_y - cfg.hog_block + 1)
    return blocks * cfg.hog_block ** 2 * cfg.hog_orientations


def daisy_point_dim(cfg: FeatureConfig) -> int:
    return cfg.daisy_orientations * (cfg.daisy_rings * cfg.daisy_histograms + 1)


def daisy_dim(cfg: FeatureConfig, width: Optional[int] = None, height: Optional[int] = None) -> int:
    ys = _daisy_grid_axis(height or cfg.canonical_size, cfg)
    xs = _daisy_grid_axis(width or cfg.canonical_size, cfg)
    return len(ys) * len(xs) * daisy_point_dim(cfg)


def feature_dim(kind: FeatureKind, cfg: FeatureConfig) -> int:
    """Descriptor length for a canonical-size image, without extracting."""
    kind = FeatureKind(kind)
    if kind == FeatureKind.HIST:
        return 3 * cfg.hist_bins
    if kind == FeatureKind.HOG:
        return hog_dim(cfg)
    if kind == FeatureKind.DAISY:
        return daisy_dim(cfg)
    return sum(feature_dim(part, cfg) for part in PART_ORDER)


# Color histogram

def color_histogram(img: ImageRGB, cfg: FeatureConfig) -> FeatureVector:
    """
    Per-channel intensity histogram, each channel normalised to sum 1.

    Value v lands in bin floor(v * B / 256); channels are concatenated as
    [R, G, B].
    """
    bins = cfg.hist_bins
    pixels = img.reshape(-1, 3).astype(np.int64)
    n = pixels.shape[0]
    parts = []
    for channel in range(3):
        idx = (pixels[:, channel] * bins) // 256
        parts.append(np.bincount(idx, minlength=bins).astype(np.float64) / n)
    return FeatureVector(FeatureKind.HIST, np.concatenate(parts))


# Gradients

def image_gradients(gray: ImageGray) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Centred differences [-1, 0, 1] with edge replication.

    Returns:
        (gx, gy): gx grows to the right, gy grows downwards
    """
    padded = np.pad(gray.astype(np.float64), 1, mode="edge")
    gx = padded[1:-1, 2:] - padded[1:-1, :-2]
    gy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    return gx, gy


# HOG

def hog_cell_histograms(gray: ImageGray, cfg: FeatureConfig) -> NDArray[np.float64]:
    """
    Per-cell orientation histograms before block normalisation.

    Bin k is centred at k * 180 / O degrees; each pixel's magnitude is split
    linearly between the two nearest bins (circular over 180 degrees).

    Returns:
        Array of shape (cells_y, cells_x, O)
    """
    height, width = gray.shape
    cell = cfg.hog_cell
    if height % cell or width % cell:
        raise DimensionNotDivisibleError(
            f"image size {width}x{height} is not divisible by hog_cell {cell}"
        )

    n_bins = cfg.hog_orientations
    gx, gy = image_gradients(gray)
    magnitude = np.hypot(gx, gy)
    theta = np.degrees(np.arctan2(gy, gx)) % 180.0

    position = theta / (180.0 / n_bins)
    lower = np.floor(position)
    frac = position - lower
    lower = lower.astype(np.int64) % n_bins
    upper = (lower + 1) % n_bins

    cells_y, cells_x = height // cell, width // cell
    rows = np.arange(height)[:, np.newaxis] // cell
    cols = np.arange(width)[np.newaxis, :] // cell
    cell_id = (rows * cells_x + cols) * n_bins

    size = cells_y * cells_x * n_bins
    hist = np.bincount((cell_id + lower).ravel(), weights=(magnitude * (1.0 - frac)).ravel(), minlength=size)
    hist += np.bincount((cell_id + upper).ravel(), weights=(magnitude * frac).ravel(), minlength=size)
    return hist.reshape(cells_y, cells_x, n_bins)


def hog(gray: ImageGray, cfg: FeatureConfig) -> FeatureVector:
    """
    Histogram of oriented gradients with L2-normalised overlapping blocks.

    Blocks of hog_block x hog_block cells slide with a one-cell stride; each
    block vector v becomes v / sqrt(|v|^2 + eps^2).
    """
    cells = hog_cell_histograms(gray, cfg)
    block = cfg.hog_block
    if cells.shape[0] < block or cells.shape[1] < block:
        raise FeatureError(f"image holds fewer than {block}x{block} cells")

    # (blocks_y, blocks_x, O, block, block) -> (blocks_y, blocks_x, block, block, O)
    windows = sliding_window_view(cells, (block, block), axis=(0, 1))
    windows = windows.transpose(0, 1, 3, 4, 2).reshape(windows.shape[0], windows.shape[1], -1)
    norms = np.sqrt(np.sum(windows ** 2, axis=2, keepdims=True) + NORM_EPS ** 2)
    return FeatureVector(FeatureKind.HOG, (windows / norms).ravel())


# DAISY

def _daisy_margin(cfg: FeatureConfig) -> int:
    return int(math.ceil(cfg.daisy_radius))


def _daisy_grid_axis(length: int, cfg: FeatureConfig) -> List[int]:
    margin = _daisy_margin(cfg)
    return list(range(margin, length - margin, cfg.daisy_step))


def daisy_sigmas(cfg: FeatureConfig) -> List[float]:
    """Gaussian sigma per sampling level: centre first, then each ring."""
    rings = [cfg.daisy_radius * (r + 1) / (2 * cfg.daisy_rings) for r in range(cfg.daisy_rings)]
    return [rings[0] / 2] + rings


def daisy_sample_offsets(cfg: FeatureConfig) -> NDArray[np.intp]:
    """
    Nearest-pixel (dy, dx) offsets of every ring sample.

    Returns:
        Array of shape (rings, histograms, 2)
    """
    offsets = np.zeros((cfg.daisy_rings, cfg.daisy_histograms, 2), dtype=np.intp)
    for r in range(cfg.daisy_rings):
        radius = cfg.daisy_radius * (r + 1) / cfg.daisy_rings
        for j in range(cfg.daisy_histograms):
            phi = 2.0 * math.pi * j / cfg.daisy_histograms
            offsets[r, j, 0] = int(np.rint(radius * math.sin(phi)))
            offsets[r, j, 1] = int(np.rint(radius * math.cos(phi)))
    return offsets


def daisy_orientation_maps(gray: ImageGray, n_orientations: int) -> NDArray[np.float64]:
    """
    Rectified oriented-gradient maps max(0, cos(theta_k - theta)) * m.

    Returns:
        Array of shape (O, H, W)
    """
    gx, gy = image_gradients(gray)
    magnitude = np.hypot(gx, gy)
    theta = np.arctan2(gy, gx)
    maps = np.empty((n_orientations,) + gray.shape, dtype=np.float64)
    for k in range(n_orientations):
        theta_k = 2.0 * math.pi * k / n_orientations
        maps[k] = np.maximum(0.0, np.cos(theta_k - theta)) * magnitude
    return maps


def normalize_histograms(hists: NDArray[np.float64]) -> NDArray[np.float64]:
    """L2-normalise along the last axis; norms below eps become exact zeros."""
    norms = np.linalg.norm(hists, axis=-1, keepdims=True)
    safe = np.where(norms < NORM_EPS, 1.0, norms)
    return np.where(norms < NORM_EPS, 0.0, hists / safe)


def daisy(gray: ImageGray, cfg: FeatureConfig) -> FeatureVector:
    """
    Dense DAISY descriptor on a regular grid.

    Per grid point the layout is [centre, ring 0 sample 0, ..., ring R-1
    sample H-1], each an O-length normalised orientation histogram.
    """
    height, width = gray.shape
    ys = _daisy_grid_axis(height, cfg)
    xs = _daisy_grid_axis(width, cfg)
    if not ys or not xs:
        raise RadiusTooLargeError(
            f"daisy_radius {cfg.daisy_radius} does not fit inside a {width}x{height} image"
        )

    n_orient = cfg.daisy_orientations
    maps = daisy_orientation_maps(gray, n_orient)
    sigmas = daisy_sigmas(cfg)
    smoothed = np.stack([
        np.stack([gaussian_filter(maps[k], sigma, mode="nearest") for k in range(n_orient)])
        for sigma in sigmas
    ])  # (levels, O, H, W)

    grid_y, grid_x = np.meshgrid(np.asarray(ys), np.asarray(xs), indexing="ij")
    grid_y, grid_x = grid_y.ravel(), grid_x.ravel()
    n_points = grid_y.shape[0]

    centre = smoothed[0][:, grid_y, grid_x].T  # (P, O)
    offsets = daisy_sample_offsets(cfg)
    ring_hists = []
    for r in range(cfg.daisy_rings):
        sample_y = grid_y[:, np.newaxis] + offsets[r, :, 0][np.newaxis, :]
        sample_x = grid_x[:, np.newaxis] + offsets[r, :, 1][np.newaxis, :]
        # (O, P, hists) -> (P, hists, O)
        ring_hists.append(smoothed[r + 1][:, sample_y, sample_x].transpose(1, 2, 0))

    descriptor = np.concatenate(
        [centre[:, np.newaxis, :]] + ring_hists, axis=1
    )  # (P, 1 + rings * hists, O)
    descriptor = normalize_histograms(descriptor)
    logger.debug(f"DAISY: {n_points} grid points, {descriptor.size} values")
    return FeatureVector(FeatureKind.DAISY, descriptor.ravel())


# Composition

def concat_features(parts: Sequence[FeatureVector]) -> FeatureVector:
    """
    L2-normalise each part independently and concatenate in the order
    [hist, hog, daisy]. Zero parts pass through unchanged.
    """
    if not parts:
        raise EmptyInputError("concat_features needs at least one part")

    rank = {kind: i for i, kind in enumerate(PART_ORDER + (FeatureKind.ALL,))}
    ordered = sorted(parts, key=lambda part: rank[part.kind])
    pieces = []
    for part in ordered:
        norm = np.linalg.norm(part.values)
        pieces.append(part.values / norm if norm > 0 else part.values.copy())
    return FeatureVector(FeatureKind.ALL, np.concatenate(pieces))


def canonicalize(img: ImageRGB, cfg: FeatureConfig) -> ImageRGB:
    """Resize to the canonical square raster."""
    return resize_bilinear(img, cfg.canonical_size, cfg.canonical_size)


def extract(img: ImageRGB, kind: FeatureKind, cfg: FeatureConfig) -> FeatureVector:
    """
    Resize to the canonical size and compute the requested descriptor.

    Args:
        img: RGB image of any size
        kind: Which descriptor to compute
        cfg: Extractor parameters

    Returns:
        FeatureVector of length feature_dim(kind, cfg)
    """
    kind = FeatureKind(kind)
    canonical = canonicalize(img, cfg)
    if kind == FeatureKind.HIST:
        return color_histogram(canonical, cfg)

    gray = to_grayscale(canonical)
    if kind == FeatureKind.HOG:
        return hog(gray, cfg)
    if kind == FeatureKind.DAISY:
        return daisy(gray, cfg)
    return concat_features([
        color_histogram(canonical, cfg),
        hog(gray, cfg),
        daisy(gray, cfg),
    ])
