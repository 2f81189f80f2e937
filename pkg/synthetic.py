"""
Seeded synthetic stamp benchmark.

Every country gets a dominant hue and a stripe orientation, every year a
stripe period; each image adds a random phase and Gaussian noise.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from config import Config
from dataset import DatasetManifest, scan_dataset
from errors import OutputWriteError
from imgio import ImageRGB, save_image

logger = logging.getLogger(__name__)

DEFAULT_YEARS = ("2008", "2012", "2016")

# One base colour per country slot; hues are spread around the wheel
PALETTE = np.array([
    [205, 45, 40],
    [225, 190, 35],
    [45, 165, 70],
    [40, 90, 210],
    [165, 55, 180],
    [40, 185, 190],
    [235, 120, 30],
], dtype=np.float64)

NOISE_SIGMA = 12.0


@dataclass(frozen=True)
class SyntheticConfig:
    countries: Tuple[str, ...] = Config.DEFAULT_COUNTRIES
    years: Tuple[str, ...] = DEFAULT_YEARS
    per_class: int = 100
    size: int = 128
    seed: int = 0

    def __post_init__(self):
        if not 1 <= len(self.countries) <= len(PALETTE):
            raise ValueError(f"between 1 and {len(PALETTE)} countries are supported")
        if not self.years:
            raise ValueError("at least one year is required")
        if self.per_class < 2 * len(self.years):
            raise ValueError(f"per_class must be at least {2 * len(self.years)} so every year class can be split")
        if self.size < 16:
            raise ValueError("size must be at least 16")


def stripe_angle(country_index: int, n_countries: int) -> float:
    """Stripe orientation in radians, evenly spread over [0, pi)."""
    return np.pi * country_index / n_countries


def stripe_period(year_index: int) -> float:
    return 6.0 + 4.0 * year_index


def render_stamp(
    country_index: int,
    year_index: int,
    n_countries: int,
    rng: np.random.Generator,
    size: int = 128
) -> ImageRGB:
    """
    Draw one synthetic stamp.

    Args:
        country_index: Slot of the country (fixes hue and stripe orientation)
        year_index: Slot of the year (fixes stripe period)
        n_countries: Total countries, used to spread orientations
        rng: Generator supplying phase and noise
        size: Width and height in pixels

    Returns:
        (size, size, 3) uint8 image
    """
    angle = stripe_angle(country_index, n_countries)
    period = stripe_period(year_index)
    phase = rng.uniform(0.0, 2.0 * np.pi)

    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    along = xs * np.cos(angle) + ys * np.sin(angle)
    stripes = 0.5 + 0.5 * np.sin(2.0 * np.pi * along / period + phase)

    base = PALETTE[country_index]
    img = base[np.newaxis, np.newaxis, :] * (0.55 + 0.45 * stripes[:, :, np.newaxis])
    img += rng.normal(0.0, NOISE_SIGMA, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def iter_stamps(params: SyntheticConfig) -> Iterator[Tuple[str, str, int, ImageRGB]]:
    """Yield (country, year, index, image) in a fixed order; years cycle per country."""
    rng = np.random.default_rng(params.seed)
    for ci, country in enumerate(params.countries):
        for i in range(params.per_class):
            yi = i % len(params.years)
            yield country, params.years[yi], i, render_stamp(ci, yi, len(params.countries), rng, params.size)


def write_synthetic_dataset(root: Union[str, Path], params: Optional[SyntheticConfig] = None) -> DatasetManifest:
    """
    Write the benchmark as <root>/<country>/<year>/<country>_<i>.png and scan it.

    Args:
        root: Output directory (created if missing)
        params: Generator settings

    Returns:
        Manifest of the written tree
    """
    params = params or SyntheticConfig()
    root = Path(root)
    count = 0
    for country, year, i, img in iter_stamps(params):
        directory = root / country / year
        try:
            directory.mkdir(parents=True, exist_ok=True)
            save_image(img, directory / f"{country}_{i:04d}.png")
        except OSError as e:
            raise OutputWriteError(f"cannot write synthetic image: {e.strerror or e}", path=str(directory)) from e
        count += 1
    logger.info(f"Wrote {count} synthetic stamps under {root} (seed {params.seed})")
    return scan_dataset(root)


def synthetic_countries(n: int) -> Sequence[str]:
    """First n default country names."""
    return Config.DEFAULT_COUNTRIES[:n]
