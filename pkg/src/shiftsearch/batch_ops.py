"""Batch-vectorized twins of the image kernels.

Fitness evaluation applies one tuple to every image of a sample set, so the
kernels here operate on (B, H, W, 3) stacks in single numpy calls. Each
function is bit-identical to mapping its single-image counterpart over the
batch (the test suite enforces this); image_ops remains the semantic
reference.
"""

import numpy as np

from . import image_ops
from .image_ops import _blend, _round_half_away, _to_uint8
from .transform_space import TransformKind


def _check_batch(images):
    if images.ndim != 4 or images.shape[3] != 3 or images.dtype != np.uint8:
        raise ValueError(f"expected a (B, H, W, 3) uint8 batch, got {images.shape}")
    return images


def grayscale_batch(images):
    arr = images.astype(np.int32)
    lum = (299 * arr[..., 0] + 587 * arr[..., 1] + 114 * arr[..., 2]) // 1000
    return np.repeat(lum.astype(np.uint8)[..., None], 3, axis=3)


def brightness_batch(images, factor):
    return _to_uint8(images.astype(np.float64) * factor)


def color_batch(images, factor):
    return _blend(grayscale_batch(images), images, factor)


def contrast_batch(images, factor):
    arr = images.astype(np.int32)
    lum = (299 * arr[..., 0] + 587 * arr[..., 1] + 114 * arr[..., 2]) // 1000
    means = _round_half_away(lum.mean(axis=(1, 2), dtype=np.float64))
    degenerate = np.clip(means, 0, 255).astype(np.uint8)[:, None, None, None]
    degenerate = np.broadcast_to(degenerate, images.shape)
    return _blend(degenerate, images, factor)


def sharpness_batch(images, factor):
    if images.shape[1] < 3 or images.shape[2] < 3:
        return images.copy()
    a = images.astype(np.float64)
    h, w = images.shape[1], images.shape[2]
    acc = 5.0 * a[:, 1:-1, 1:-1]
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            if dy == 1 and dx == 1:
                continue
            acc += a[:, dy : dy + h - 2, dx : dx + w - 2]
    degenerate = images.copy()
    degenerate[:, 1:-1, 1:-1] = _to_uint8(acc / 13.0)
    return _blend(degenerate, images, factor)


def solarize_batch(images, threshold):
    return np.where(images >= threshold, 255 - images, images)


def enhance_channel_batch(images, channel, delta):
    out = images.copy()
    out[..., channel] = _to_uint8(images[..., channel].astype(np.float64) + delta)
    return out


def autocontrast_batch(images, cutoff):
    # one histogram row per (image, channel) pair via an offset bincount,
    # then the same strict-cumulative trim rule as the per-image kernel
    batch, h, w = images.shape[0], images.shape[1], images.shape[2]
    n = h * w
    cut = int(cutoff * n)
    planes = images.transpose(0, 3, 1, 2).reshape(batch * 3, n)
    rows = np.arange(batch * 3)
    hist = np.bincount(
        (planes.astype(np.int64) + rows[:, None] * 256).ravel(),
        minlength=batch * 3 * 256,
    ).reshape(batch * 3, 256)
    cum = np.cumsum(hist, axis=1)
    surviving = (cum > cut) & ((n - cum + hist) > cut)
    any_valid = surviving.any(axis=1)
    lo = np.argmax(surviving, axis=1)
    hi = 255 - np.argmax(surviving[:, ::-1], axis=1)
    stretch = any_valid & (hi > lo)
    span = np.where(stretch, hi - lo, 1).astype(np.float64)
    values = np.arange(256, dtype=np.float64)
    luts = _to_uint8((values[None, :] - lo[:, None]) * 255.0 / span[:, None])
    identity = np.arange(256, dtype=np.uint8)
    luts[~stretch] = identity
    out = luts[rows[:, None], planes]
    return out.reshape(batch, 3, h, w).transpose(0, 2, 3, 1)


_BATCH_KERNELS = {
    TransformKind.AUTOCONTRAST: autocontrast_batch,
    TransformKind.BRIGHTNESS: brightness_batch,
    TransformKind.COLOR: color_batch,
    TransformKind.CONTRAST: contrast_batch,
    TransformKind.SHARPNESS: sharpness_batch,
    TransformKind.SOLARIZE: solarize_batch,
    TransformKind.GRAYSCALE: lambda imgs, _mag: grayscale_batch(imgs),
    TransformKind.ENHANCE_R: lambda imgs, mag: enhance_channel_batch(imgs, 0, mag),
    TransformKind.ENHANCE_G: lambda imgs, mag: enhance_channel_batch(imgs, 1, mag),
    TransformKind.ENHANCE_B: lambda imgs, mag: enhance_channel_batch(imgs, 2, mag),
}


def apply_tuple_batch(t, images):
    """Apply every atom of a tuple to a whole image stack, left to right."""
    _check_batch(images)
    out = images
    for inst in t:
        out = _BATCH_KERNELS[inst.kind](out, inst.magnitude)
    return out if out is not images else images.copy()
