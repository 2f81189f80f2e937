"""
Image decoding, grayscale conversion and bilinear resizing.

Images are plain numpy arrays:
    ImageRGB  -- shape (H, W, 3), dtype uint8, channels in [0, 255]
    ImageGray -- shape (H, W), dtype float64, values in [0, 1]
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
from numpy.typing import NDArray
from PIL import Image, UnidentifiedImageError

from errors import (
    CorruptImageError,
    ImageNotFoundError,
    InvalidDimensionsError,
    UnsupportedFormatError,
)

logger = logging.getLogger(__name__)

ImageRGB = NDArray[np.uint8]
ImageGray = NDArray[np.float64]

SUPPORTED_FORMATS = {"PNG", "JPEG"}
LUMINANCE_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def load_image(path: Union[str, Path]) -> ImageRGB:
    """
    Decode a PNG or JPEG file into an RGB array.

    Alpha is dropped and single-channel sources are replicated across R, G, B.

    Args:
        path: Path to the image file

    Returns:
        Array of shape (H, W, 3), dtype uint8

    Raises:
        ImageNotFoundError: path does not exist
        UnsupportedFormatError: file is not PNG or JPEG
        CorruptImageError: decoding failed
    """
    path = Path(path)
    if not path.is_file():
        raise ImageNotFoundError("image file not found", path=str(path))

    try:
        with Image.open(path) as img:
            if img.format not in SUPPORTED_FORMATS:
                raise UnsupportedFormatError(
                    f"unsupported image format {img.format}; expected PNG or JPEG",
                    path=str(path)
                )
            img.load()
            arr = _to_rgb_array(img)
    except UnidentifiedImageError as e:
        if path.suffix.lower() in (".png", ".jpg", ".jpeg"):
            raise CorruptImageError(f"cannot decode image: {e}", path=str(path)) from e
        raise UnsupportedFormatError("not a PNG or JPEG file", path=str(path)) from e
    except (OSError, SyntaxError, ValueError) as e:
        raise CorruptImageError(f"cannot decode image: {e}", path=str(path)) from e

    logger.debug(f"Loaded {path} ({arr.shape[1]}x{arr.shape[0]})")
    return arr


def _to_rgb_array(img: Image.Image) -> ImageRGB:
    """Convert any decoded PIL mode to an (H, W, 3) uint8 array."""
    if img.mode in ("I", "I;16", "I;16B", "I;16L"):
        # 16-bit grayscale PNG
        gray = (np.asarray(img, dtype=np.uint32) >> 8).astype(np.uint8)
        return np.repeat(gray[:, :, np.newaxis], 3, axis=2)
    if img.mode != "RGB":
        img = img.convert("RGB")
    return np.array(img, dtype=np.uint8)


def save_image(img: Union[ImageRGB, ImageGray], path: Union[str, Path]) -> None:
    """
    Encode an image array as PNG (or JPEG, by extension).

    Float grayscale input in [0, 1] is scaled to 8 bits.
    """
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        arr = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    # 2-D uint8 maps to mode L, (H, W, 3) to RGB
    Image.fromarray(arr).save(path)


def to_grayscale(img: ImageRGB) -> ImageGray:
    """
    Convert RGB to luminance in [0, 1] with ITU-R BT.601 weights.

    Args:
        img: RGB image (H, W, 3)

    Returns:
        Grayscale image (H, W), float64
    """
    lum = np.tensordot(img.astype(np.float64), LUMINANCE_WEIGHTS, axes=([-1], [0])) / 255.0
    return np.clip(lum, 0.0, 1.0)


def resize_bilinear(
    img: Union[ImageRGB, ImageGray],
    target_w: int,
    target_h: int
) -> Union[ImageRGB, ImageGray]:
    """
    Resize with bilinear interpolation and edge clamping.

    Pixel centres are aligned (source coordinate = (dst + 0.5) * scale - 0.5),
    so resizing to the source size reproduces the input exactly. The output
    has the same kind (dtype and channel layout) as the input.

    Args:
        img: RGB or grayscale image
        target_w: Output width in pixels
        target_h: Output height in pixels

    Returns:
        Resized image of shape (target_h, target_w[, 3])
    """
    if target_w < 1 or target_h < 1:
        raise InvalidDimensionsError(f"target size must be positive, got {target_w}x{target_h}")

    src_h, src_w = img.shape[:2]
    if (src_w, src_h) == (target_w, target_h):
        return img.copy()

    x0, x1, wx = _bilinear_axis(src_w, target_w)
    y0, y1, wy = _bilinear_axis(src_h, target_h)

    data = img.astype(np.float64)
    if data.ndim == 3:
        wx = wx[np.newaxis, :, np.newaxis]
        wy = wy[:, np.newaxis, np.newaxis]
    else:
        wx = wx[np.newaxis, :]
        wy = wy[:, np.newaxis]

    # Horizontal pass, then vertical
    rows = data[:, x0] * (1.0 - wx) + data[:, x1] * wx
    out = rows[y0] * (1.0 - wy) + rows[y1] * wy

    if img.dtype == np.uint8:
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out


def _bilinear_axis(src: int, dst: int):
    """Neighbour indices and weights along one axis."""
    scale = src / dst
    coords = (np.arange(dst, dtype=np.float64) + 0.5) * scale - 0.5
    coords = np.clip(coords, 0.0, src - 1)
    lo = np.floor(coords).astype(np.intp)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, coords - lo
