"""Pure raster kernels over 8-bit RGB images.

An image is a numpy array of shape (H, W, 3) and dtype uint8. Every kernel
returns a new array of the same shape, never mutates its input, and clamps
all channel values to [0, 255]. The blend-style kernels (brightness, color,
contrast, sharpness) compute

    out = degenerate + factor * (original - degenerate)

per channel, rounded half away from zero, then clamped.
"""

import numpy as np

__all__ = [
    "autocontrast",
    "brightness",
    "color",
    "contrast",
    "sharpness",
    "solarize",
    "grayscale",
    "enhance_channel",
]

CHANNEL_R, CHANNEL_G, CHANNEL_B = 0, 1, 2


def check_image(img):
    """Validate the (H, W, 3) uint8 contract, returning the array unchanged."""
    if not isinstance(img, np.ndarray):
        raise TypeError(f"image must be a numpy array, got {type(img).__name__}")
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"image must have shape (H, W, 3), got {img.shape}")
    if img.dtype != np.uint8:
        raise ValueError(f"image must be uint8, got {img.dtype}")
    return img


def _round_half_away(x):
    # np.round would round halves to even; the kernels round away from zero.
    return np.trunc(x + np.copysign(0.5, x))


def _to_uint8(x):
    # callers pass freshly computed float arrays; after the [0, 255] clamp,
    # rounding half away from zero is the same as floor(x + 0.5) (negative
    # values end up at 0 under both), which is one cheap ufunc chain
    out = x + 0.5
    np.floor(out, out=out)
    np.clip(out, 0, 255, out=out)
    return out.astype(np.uint8)


def _blend(degenerate, original, factor):
    deg = degenerate.astype(np.float64)
    out = deg + factor * (original.astype(np.float64) - deg)
    return _to_uint8(out)


def _luminance(img):
    """Integer luminance plane: floor((299 R + 587 G + 114 B) / 1000)."""
    arr = img.astype(np.int32)
    return (299 * arr[..., 0] + 587 * arr[..., 1] + 114 * arr[..., 2]) // 1000


def grayscale(img):
    """Replace all three channels with the integer luminance of each pixel."""
    check_image(img)
    lum = _luminance(img).astype(np.uint8)
    return np.repeat(lum[..., None], 3, axis=2)


def brightness(img, factor):
    """Scale all channels by factor; 0 gives a black image, 1 the original."""
    check_image(img)
    if factor < 0:
        raise ValueError(f"brightness factor must be >= 0, got {factor}")
    return _to_uint8(img.astype(np.float64) * factor)


def color(img, factor):
    """Blend between the grayscale version (factor 0) and the original (1)."""
    check_image(img)
    if factor < 0:
        raise ValueError(f"color factor must be >= 0, got {factor}")
    return _blend(grayscale(img), img, factor)


def contrast(img, factor):
    """Blend between a constant image at the mean luminance and the original."""
    check_image(img)
    if factor < 0:
        raise ValueError(f"contrast factor must be >= 0, got {factor}")
    mean = float(_round_half_away(np.array(_luminance(img).mean())))
    degenerate = np.full_like(img, np.uint8(np.clip(mean, 0, 255)))
    return _blend(degenerate, img, factor)


def _smooth(img):
    # 3x3 kernel [[1,1,1],[1,5,1],[1,1,1]] / 13 on interior pixels; the
    # one-pixel border keeps the original unfiltered values.
    a = img.astype(np.float64)
    acc = 5.0 * a[1:-1, 1:-1]
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            if dy == 1 and dx == 1:
                continue
            acc += a[dy : dy + a.shape[0] - 2, dx : dx + a.shape[1] - 2]
    out = img.copy()
    out[1:-1, 1:-1] = _to_uint8(acc / 13.0)
    return out


def sharpness(img, factor):
    """Blend between a 3x3-smoothed version (factor 0) and the original (1)."""
    check_image(img)
    if factor < 0:
        raise ValueError(f"sharpness factor must be >= 0, got {factor}")
    if img.shape[0] < 3 or img.shape[1] < 3:
        return img.copy()
    return _blend(_smooth(img), img, factor)


def solarize(img, threshold):
    """Invert every channel value at or above the threshold."""
    check_image(img)
    if not 0 <= threshold <= 255:
        raise ValueError(f"solarize threshold must be in [0, 255], got {threshold}")
    return np.where(img >= threshold, 255 - img, img)


def autocontrast(img, cutoff):
    """Stretch each channel histogram to full range.

    Per channel: drop floor(cutoff * pixel_count) pixels from each end of the
    256-bin histogram, find the surviving minimum m and maximum M, and remap
    v -> round((v - m) * 255 / (M - m)) with clamping. Channels whose trimmed
    histogram collapses (M <= m) pass through unchanged.
    """
    check_image(img)
    if not 0 <= cutoff <= 1:
        raise ValueError(f"autocontrast cutoff must be a fraction in [0, 1], got {cutoff}")
    n = img.shape[0] * img.shape[1]
    cut = int(cutoff * n)
    out = np.empty_like(img)
    values = np.arange(256, dtype=np.float64)
    for c in range(3):
        chan = img[..., c]
        hist = np.bincount(chan.ravel(), minlength=256)
        cum = np.cumsum(hist)
        # a bin survives trimming an end iff the cumulative pixel count up to
        # and including it strictly exceeds the cut budget for that end
        survives_low = cum > cut
        survives_high = (n - cum + hist) > cut
        surviving = np.nonzero(survives_low & survives_high)[0]
        if surviving.size == 0:
            out[..., c] = chan
            continue
        lo, hi = int(surviving[0]), int(surviving[-1])
        if hi <= lo:
            out[..., c] = chan
            continue
        lut = _to_uint8((values - lo) * 255.0 / (hi - lo))
        out[..., c] = lut[chan]
    return out


def enhance_channel(img, channel, delta):
    """Add delta to one channel of all pixels, saturating at 0 and 255."""
    check_image(img)
    if channel not in (CHANNEL_R, CHANNEL_G, CHANNEL_B):
        raise ValueError(f"channel must be 0, 1 or 2, got {channel}")
    if not -255 <= delta <= 255:
        raise ValueError(f"delta must be in [-255, 255], got {delta}")
    out = img.copy()
    out[..., channel] = _to_uint8(img[..., channel].astype(np.float64) + delta)
    return out
