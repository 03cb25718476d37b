"""PNG read/write for 8-bit RGB images.

Grayscale PNGs are replicated into three channels on load. Anything that is
not 8-bit grayscale or RGB is rejected; the kernels only operate on
(H, W, 3) uint8 arrays.
"""

import numpy as np
from PIL import Image

from .errors import DatasetError


def read_png(path):
    """Load a PNG as an (H, W, 3) uint8 array."""
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            arr = np.asarray(im)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise DatasetError(f"cannot read image {path}: {exc}") from exc
    if arr.dtype != np.uint8:
        raise DatasetError(f"{path}: only 8-bit images are supported, got {arr.dtype}")
    if mode == "L":
        return np.repeat(arr[..., None], 3, axis=2)
    if mode == "RGB":
        return arr.copy()
    raise DatasetError(f"{path}: unsupported mode {mode!r}, expected 8-bit L or RGB")


def write_png(path, img):
    """Write an (H, W, 3) uint8 array as an RGB PNG."""
    from .image_ops import check_image

    check_image(img)
    Image.fromarray(img, mode="RGB").save(path, format="PNG")
