import sys
from pathlib import Path

import numpy as np
import pytest

# make the reference_ops helper importable from any test module
sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_images(count, side, rng, structured=True):
    """Seeded test corpus: mostly uniform noise plus a few degenerate cases
    (constants, low dynamic range, gradients) that stress the histogram and
    blend paths."""
    images = []
    for i in range(count):
        kind = i % 10 if structured else 9
        if kind == 0:
            img = np.full((side, side, 3), rng.integers(0, 256), dtype=np.uint8)
        elif kind == 1:
            lo = int(rng.integers(0, 200))
            img = rng.integers(lo, min(256, lo + 30), (side, side, 3)).astype(np.uint8)
        elif kind == 2:
            ramp = np.linspace(0, 255, side, dtype=np.uint8)
            img = np.stack([np.tile(ramp, (side, 1))] * 3, axis=2)
            img = np.ascontiguousarray(img)
        else:
            img = rng.integers(0, 256, (side, side, 3), dtype=np.uint8)
        images.append(img)
    return images
