"""The transformation set T, the tuple space T_N, and tuple application.

An atom is a (kind, magnitude level) pair drawn from a TransformSet; a tuple
is an ordered, fixed-length sequence of atoms applied left to right. The
search space over length-n tuples has exactly (sum of level counts) ** n
members, and sampling is uniform over that space.
"""

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import image_ops
from .errors import ConfigError


class TransformKind(str, Enum):
    AUTOCONTRAST = "autocontrast"
    BRIGHTNESS = "brightness"
    COLOR = "color"
    CONTRAST = "contrast"
    SHARPNESS = "sharpness"
    SOLARIZE = "solarize"
    GRAYSCALE = "grayscale"
    ENHANCE_R = "enhance_r"
    ENHANCE_G = "enhance_g"
    ENHANCE_B = "enhance_b"


_KERNELS = {
    TransformKind.AUTOCONTRAST: image_ops.autocontrast,
    TransformKind.BRIGHTNESS: image_ops.brightness,
    TransformKind.COLOR: image_ops.color,
    TransformKind.CONTRAST: image_ops.contrast,
    TransformKind.SHARPNESS: image_ops.sharpness,
    TransformKind.SOLARIZE: image_ops.solarize,
    TransformKind.GRAYSCALE: lambda img, _mag: image_ops.grayscale(img),
    TransformKind.ENHANCE_R: lambda img, mag: image_ops.enhance_channel(img, 0, mag),
    TransformKind.ENHANCE_G: lambda img, mag: image_ops.enhance_channel(img, 1, mag),
    TransformKind.ENHANCE_B: lambda img, mag: image_ops.enhance_channel(img, 2, mag),
}


@dataclass(frozen=True)
class TransformInstance:
    """One atom: a transformation kind at one discretized magnitude level."""

    kind: TransformKind
    level: int
    magnitude: float

    def apply(self, img):
        return _KERNELS[self.kind](img, self.magnitude)

    def text(self):
        return f"{self.kind.value}@{self.level}"


class TransformTuple(tuple):
    """Ordered sequence of TransformInstances, applied left to right.

    The empty tuple is the identity sentinel: it belongs to no tuple space
    but is a valid (do nothing) transformation, serialized as "identity".
    """

    def text(self):
        if len(self) == 0:
            return "identity"
        return "+".join(inst.text() for inst in self)

    def __repr__(self):
        return f"TransformTuple({self.text()!r})"


IDENTITY = TransformTuple(())


def _linear_grid(lo, hi, levels):
    if levels == 1:
        return np.array([float(lo)])
    return np.linspace(float(lo), float(hi), levels)


class TransformSet:
    """Ordered collection of (kind, magnitude grid) entries.

    Each kind appears at most once; a grid holds the discretized magnitudes
    for that kind, linearly spaced and inclusive of both range endpoints.
    """

    def __init__(self, entries):
        """entries: iterable of (TransformKind, magnitude grid) pairs."""
        self.entries = []
        seen = set()
        for kind, grid in entries:
            kind = TransformKind(kind)
            if kind in seen:
                raise ConfigError(f"kind {kind.value!r} appears more than once")
            seen.add(kind)
            grid = np.asarray(grid, dtype=np.float64)
            if grid.ndim != 1 or grid.size == 0:
                raise ConfigError(f"magnitude grid for {kind.value!r} must be non-empty")
            self.entries.append((kind, grid))
        if not self.entries:
            raise ConfigError("transform set must contain at least one entry")
        # flat index -> (entry index, level) for uniform atom sampling
        self._kind_index = {kind: i for i, (kind, _) in enumerate(self.entries)}
        self._offsets = np.cumsum([0] + [len(g) for _, g in self.entries])

    @property
    def total_atoms(self):
        """Sum of level counts over all kinds."""
        return int(self._offsets[-1])

    def grid(self, kind):
        kind = TransformKind(kind)
        if kind not in self._kind_index:
            raise ConfigError(f"kind {kind.value!r} is not in this set")
        return self.entries[self._kind_index[kind]][1]

    def instance(self, kind, level):
        """Build the atom for a kind at a given level index."""
        grid = self.grid(kind)
        level = int(level)
        if not 0 <= level < len(grid):
            raise ConfigError(
                f"level {level} out of range for {TransformKind(kind).value!r} "
                f"({len(grid)} levels)"
            )
        return TransformInstance(TransformKind(kind), level, float(grid[level]))

    def atom(self, flat_index):
        """Atom at a flat index in [0, total_atoms)."""
        flat = int(flat_index)
        if not 0 <= flat < self.total_atoms:
            raise ConfigError(f"flat atom index {flat} out of range")
        entry = int(np.searchsorted(self._offsets, flat, side="right")) - 1
        kind, grid = self.entries[entry]
        level = flat - int(self._offsets[entry])
        return TransformInstance(kind, level, float(grid[level]))

    def atoms(self):
        """All atoms in flat-index order."""
        return [self.atom(i) for i in range(self.total_atoms)]

    def sample_atom(self, rng):
        return self.atom(int(rng.integers(self.total_atoms)))


_FULL_RANGES = {
    TransformKind.AUTOCONTRAST: (0.0, 0.3, 20),
    TransformKind.COLOR: (0.6, 1.4, 20),
    TransformKind.CONTRAST: (0.6, 1.4, 20),
    TransformKind.SHARPNESS: (0.6, 1.4, 20),
    TransformKind.SOLARIZE: (0.0, 20.0, 20),
    TransformKind.GRAYSCALE: (0.0, 0.0, 1),
}

_PRESETS = {
    # kind -> (lo, hi, levels); wide brightness and channel shifts for the
    # digit set, narrower ones elsewhere, per-task membership as published.
    "mnist": {
        **_FULL_RANGES,
        TransformKind.BRIGHTNESS: (0.6, 1.4, 20),
        TransformKind.ENHANCE_R: (-120.0, 120.0, 30),
        TransformKind.ENHANCE_G: (-120.0, 120.0, 30),
        TransformKind.ENHANCE_B: (-120.0, 120.0, 30),
    },
    "cifar": {
        TransformKind.AUTOCONTRAST: (0.0, 0.3, 20),
        TransformKind.BRIGHTNESS: (0.8, 1.2, 20),
        TransformKind.COLOR: (0.6, 1.4, 20),
        TransformKind.CONTRAST: (0.6, 1.4, 20),
        TransformKind.SHARPNESS: (0.6, 1.4, 20),
        TransformKind.ENHANCE_R: (-30.0, 30.0, 30),
        TransformKind.ENHANCE_G: (-30.0, 30.0, 30),
        TransformKind.ENHANCE_B: (-30.0, 30.0, 30),
    },
    "camvid": {
        TransformKind.AUTOCONTRAST: (0.0, 0.3, 20),
        TransformKind.BRIGHTNESS: (0.8, 1.2, 20),
        TransformKind.COLOR: (0.6, 1.4, 20),
        TransformKind.CONTRAST: (0.6, 1.4, 20),
        TransformKind.SHARPNESS: (0.6, 1.4, 20),
        TransformKind.ENHANCE_R: (-120.0, 120.0, 30),
        TransformKind.ENHANCE_G: (-120.0, 120.0, 30),
        TransformKind.ENHANCE_B: (-120.0, 120.0, 30),
    },
    "faces": {
        TransformKind.AUTOCONTRAST: (0.0, 0.3, 20),
        TransformKind.BRIGHTNESS: (0.8, 1.2, 20),
        TransformKind.COLOR: (0.6, 1.4, 20),
        TransformKind.CONTRAST: (0.6, 1.4, 20),
        TransformKind.SHARPNESS: (0.6, 1.4, 20),
        TransformKind.GRAYSCALE: (0.0, 0.0, 1),
        TransformKind.ENHANCE_R: (-120.0, 120.0, 30),
        TransformKind.ENHANCE_G: (-120.0, 120.0, 30),
        TransformKind.ENHANCE_B: (-120.0, 120.0, 30),
    },
}

# canonical entry order within a set
_KIND_ORDER = list(TransformKind)

PRESET_NAMES = tuple(sorted(_PRESETS))


def preset_set(name):
    """One of the four published transformation sets, by experiment name."""
    if name not in _PRESETS:
        raise ConfigError(
            f"unknown preset {name!r}; valid presets: {', '.join(PRESET_NAMES)}"
        )
    spec = _PRESETS[name]
    entries = []
    for kind in _KIND_ORDER:
        if kind in spec:
            lo, hi, levels = spec[kind]
            entries.append((kind, _linear_grid(lo, hi, levels)))
    return TransformSet(entries)


def load_transform_set(source):
    """Build a custom set from a JSON document.

    The document is a list of entries, each with "kind", "levels", and
    (except for grayscale) "min" and "max". `source` may be a path or an
    already-parsed list.
    """
    if isinstance(source, (str, bytes)):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = source
    if not isinstance(doc, list):
        raise ConfigError("transform set document must be a JSON list of entries")
    entries = []
    for entry in doc:
        try:
            kind = TransformKind(entry["kind"])
            levels = int(entry["levels"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad transform set entry {entry!r}: {exc}") from exc
        if levels < 1:
            raise ConfigError(f"levels must be >= 1 in entry {entry!r}")
        if kind is TransformKind.GRAYSCALE:
            lo = float(entry.get("min", 0.0))
            hi = float(entry.get("max", lo))
        else:
            try:
                lo, hi = float(entry["min"]), float(entry["max"])
            except KeyError as exc:
                raise ConfigError(f"entry {entry!r} needs min and max") from exc
        if hi < lo:
            raise ConfigError(f"entry {entry!r} has max < min")
        entries.append((kind, _linear_grid(lo, hi, levels)))
    return TransformSet(entries)


def search_space_size(tset, n):
    """Exact number of length-n tuples: (sum of level counts) ** n."""
    if n < 1:
        raise ConfigError(f"tuple length must be >= 1, got {n}")
    return tset.total_atoms ** int(n)


def sample_tuple(tset, n, rng):
    """Draw a tuple uniformly from the space of length-n tuples."""
    if n < 1:
        raise ConfigError(f"tuple length must be >= 1, got {n}")
    flats = rng.integers(tset.total_atoms, size=int(n))
    return TransformTuple(tset.atom(f) for f in flats)


def apply_tuple(t, img):
    """Apply every atom of the tuple left to right; identity applies nothing."""
    image_ops.check_image(img)
    out = img
    for inst in t:
        out = inst.apply(out)
    return out if out is not img else img.copy()


def parse_tuple(text, tset):
    """Parse the text form back into a tuple against a set's grids.

    Format: "kind@level" items joined by "+", or the literal "identity".
    """
    stripped = text.strip()
    if stripped == "identity":
        return IDENTITY
    if not stripped:
        raise ConfigError("empty tuple text")
    items = []
    for token in stripped.split("+"):
        token = token.strip()
        kind_name, sep, level_text = token.partition("@")
        if not sep:
            raise ConfigError(f"bad tuple item {token!r}: expected kind@level")
        try:
            kind = TransformKind(kind_name)
        except ValueError:
            raise ConfigError(f"bad tuple item {token!r}: unknown kind {kind_name!r}")
        try:
            level = int(level_text)
        except ValueError:
            raise ConfigError(f"bad tuple item {token!r}: level must be an integer")
        items.append(tset.instance(kind, level))
    return TransformTuple(items)
