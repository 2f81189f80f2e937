import logging
import math
from pathlib import Path
from typing import Union

from PIL import Image, ImageDraw

from errors import OutputWriteError
from features import FeatureConfig, hog_cell_histograms
from imgio import ImageGray

logger = logging.getLogger(__name__)


def render_hog(gray: ImageGray, cfg: FeatureConfig, scale: int = 2) -> Image.Image:
    """
    Draw a star plot of each cell's orientation histogram.

    Every bin becomes a line through the cell centre, perpendicular to the
    gradient direction of the bin (i.e. along the edge), with brightness
    proportional to the bin weight relative to the strongest bin.

    Args:
        gray: Grayscale image whose size is divisible by hog_cell
        cfg: Feature configuration
        scale: Upsampling factor of the rendering

    Returns:
        8-bit grayscale PIL image
    """
    cells = hog_cell_histograms(gray, cfg)
    cells_y, cells_x, n_bins = cells.shape
    cell_px = cfg.hog_cell * scale
    canvas = Image.new("L", (cells_x * cell_px, cells_y * cell_px), 0)
    draw = ImageDraw.Draw(canvas)

    peak = float(cells.max())
    if peak <= 0:
        return canvas

    half = cell_px / 2.0 - 1
    for cy in range(cells_y):
        for cx in range(cells_x):
            centre_x = (cx + 0.5) * cell_px
            centre_y = (cy + 0.5) * cell_px
            for k in range(n_bins):
                weight = cells[cy, cx, k] / peak
                if weight <= 0:
                    continue
                edge_angle = math.radians(k * 180.0 / n_bins) + math.pi / 2
                dx = half * math.cos(edge_angle)
                dy = half * math.sin(edge_angle)
                draw.line(
                    [(centre_x - dx, centre_y - dy), (centre_x + dx, centre_y + dy)],
                    fill=int(round(255 * weight))
                )
    return canvas


def dump_hog(gray: ImageGray, cfg: FeatureConfig, path: Union[str, Path]) -> None:
    """Write the HOG rendering of an image as PNG."""
    try:
        render_hog(gray, cfg).save(Path(path), format="PNG")
    except OSError as e:
        raise OutputWriteError(f"cannot write HOG rendering: {e.strerror or e}", path=str(path)) from e
    logger.info(f"Wrote HOG rendering to {path}")
