"""Black-box model handles, datasets, and the tuple fitness function.

A model is anything exposing batch prediction over uint8 RGB images; it can
be the builtin trainable classifier or an external process speaking the
line-delimited JSON protocol (see ExternalOracle). The fitness of a tuple
is the fraction of a labeled sample set the model still gets right after
the tuple is applied to every image.
"""

import base64
import csv
import json
import os
import select
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass

import numpy as np

from .batch_ops import apply_tuple_batch
from .errors import AdapterError, ConfigError, DatasetError, EvaluationError
from .png_io import read_png, write_png

MANIFEST_NAME = "manifest.csv"
PROTOCOL_VERSION = 1


@dataclass
class LabeledDataset:
    """Images with class labels; all images share one shape."""

    images: np.ndarray  # (N, H, W, 3) uint8
    labels: np.ndarray  # (N,) int64
    num_classes: int

    def __post_init__(self):
        self.images = np.asarray(self.images)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or self.images.shape[3] != 3:
            raise DatasetError(f"images must be (N, H, W, 3), got {self.images.shape}")
        if self.images.dtype != np.uint8:
            raise DatasetError(f"images must be uint8, got {self.images.dtype}")
        if self.labels.shape != (self.images.shape[0],):
            raise DatasetError("labels must align one-to-one with images")
        if self.num_classes < 1:
            raise DatasetError("num_classes must be positive")
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.num_classes
        ):
            raise DatasetError(
                f"labels must lie in [0, {self.num_classes}), "
                f"got range [{self.labels.min()}, {self.labels.max()}]"
            )

    def __len__(self):
        return self.images.shape[0]

    def subset(self, indices):
        return LabeledDataset(
            self.images[indices], self.labels[indices], self.num_classes
        )


class Oracle:
    """Batch-prediction handle over a black-box model."""

    #: whether predict_batch may be called from several threads at once
    concurrency_safe = False

    def predict_batch(self, images):
        raise NotImplementedError


class BuiltinOracle(Oracle):
    """Wraps the builtin classifier; inference only, weights untouched."""

    concurrency_safe = True

    def __init__(self, model):
        self.model = model

    def predict_batch(self, images):
        return self.model.predict(images)


def predict_batch(oracle, images):
    """Predict class indices for a batch, enforcing the one-per-image contract."""
    images = np.asarray(images)
    if images.ndim != 4 or images.shape[0] == 0:
        raise ConfigError("predict_batch needs a non-empty batch of equal-size images")
    preds = np.asarray(oracle.predict_batch(images))
    if preds.shape != (images.shape[0],):
        raise AdapterError(
            f"oracle returned {preds.shape} predictions for a batch of {images.shape[0]}"
        )
    return preds.astype(np.int64)


def transform_images(t, images):
    """Apply one tuple to every image of a stacked (N, H, W, 3) batch.

    Same result as applying the tuple per image, computed with the batch
    kernels in one vectorized pass.
    """
    return apply_tuple_batch(t, images)


def fitness(oracle, t, data):
    """Mean accuracy of the model on the dataset transformed by tuple t.

    Returns a float in [0, 1]; lower values mean the model is more
    vulnerable to the tuple. The dataset and model are left unchanged.
    """
    if len(data) == 0:
        raise ConfigError("fitness needs a non-empty dataset")
    transformed = transform_images(t, data.images)
    try:
        preds = predict_batch(oracle, transformed)
    except AdapterError as exc:
        raise EvaluationError(
            f"fitness evaluation failed for tuple {t.text()}: {exc}",
            tuple_text=t.text(),
        ) from exc
    return float(np.mean(preds == data.labels))


def load_dataset(path, limit=None, rng=None):
    """Load a manifest.csv + PNG directory dataset.

    With `limit` set below the dataset size, a uniform subsample without
    replacement is drawn from `rng`.
    """
    manifest = os.path.join(path, MANIFEST_NAME)
    if not os.path.isfile(manifest):
        raise DatasetError(f"no {MANIFEST_NAME} in {path}")
    with open(manifest, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["filename", "label"]:
            raise DatasetError(f"{manifest}: expected header 'filename,label'")
        rows = [row for row in reader if row]
    if not rows:
        raise DatasetError(f"{manifest}: no samples listed")
    names, labels = [], []
    for row in rows:
        if len(row) != 2:
            raise DatasetError(f"{manifest}: malformed row {row!r}")
        names.append(row[0])
        try:
            label = int(row[1])
        except ValueError:
            raise DatasetError(f"{manifest}: non-integer label in row {row!r}")
        if label < 0:
            raise DatasetError(f"{manifest}: negative label in row {row!r}")
        labels.append(label)
    num_classes = max(labels) + 1
    if limit is not None and limit < len(names):
        if rng is None:
            raise ConfigError("subsampling with limit requires a random generator")
        keep = rng.choice(len(names), size=int(limit), replace=False)
        names = [names[i] for i in keep]
        labels = [labels[i] for i in keep]
    images = []
    shape = None
    for name in names:
        img = read_png(os.path.join(path, name))
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise DatasetError(
                f"{name}: image shape {img.shape} differs from {shape}"
            )
        images.append(img)
    return LabeledDataset(np.stack(images), np.array(labels), num_classes)


def write_dataset(path, data):
    """Write a dataset as manifest.csv plus numbered PNG files."""
    os.makedirs(path, exist_ok=True)
    width = max(5, len(str(len(data))))
    with open(os.path.join(path, MANIFEST_NAME), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "label"])
        for i in range(len(data)):
            name = f"{i:0{width}d}.png"
            write_png(os.path.join(path, name), data.images[i])
            writer.writerow([name, int(data.labels[i])])


# Synthetic glyph dataset: one blocky glyph per class, drawn white on a
# black background with shaded stroke edges (as antialiased digits would
# have), jittered per sample. A stand-in for small digit sets. The shading
# matters: uniform-intensity strokes can be erased outright by histogram
# tricks, which no amount of training could defend against.

_GLYPH_GRID = 6  # cell grid; the outer ring stays black so jitter never clips


def synthetic_prototypes(num_classes, side, rng):
    """Per-class glyph masks, pairwise different in at least 5% of pixels."""
    if num_classes < 2:
        raise ConfigError("need at least 2 classes")
    if side < _GLYPH_GRID:
        raise ConfigError(f"side must be at least {_GLYPH_GRID}")
    upscale = (np.arange(side) * _GLYPH_GRID) // side
    min_diff = 0.05 * side * side
    protos = []
    for _ in range(num_classes):
        for _attempt in range(1000):
            cells = rng.random((_GLYPH_GRID, _GLYPH_GRID)) < 0.5
            cells[0, :] = cells[-1, :] = False
            cells[:, 0] = cells[:, -1] = False
            if not cells.any():
                continue
            mask = cells[upscale][:, upscale]
            if all(np.sum(mask ^ p) >= min_diff for p in protos):
                protos.append(mask)
                break
        else:
            raise RuntimeError("failed to generate sufficiently distinct glyphs")
    return np.stack(protos)


def _shift2d(mask, dy, dx):
    out = np.zeros_like(mask)
    h, w = mask.shape
    out[max(dy, 0) : h + min(dy, 0), max(dx, 0) : w + min(dx, 0)] = mask[
        max(-dy, 0) : h + min(-dy, 0), max(-dx, 0) : w + min(-dx, 0)
    ]
    return out


def _box3(field):
    padded = np.pad(field, 1)
    h, w = field.shape
    return (
        sum(padded[dy : dy + h, dx : dx + w] for dy in range(3) for dx in range(3))
        / 9.0
    )


def _shade(mask):
    """Graded stroke intensities: interiors near 255, edges down around 75."""
    blur = _box3(_box3(mask.astype(np.float64)))
    return np.where(mask, 40.0 + 215.0 * blur**2, 0.0)


def make_synthetic_dataset(num_classes, samples_per_class, side, rng):
    """Balanced glyph classification dataset, deterministic given the rng seed."""
    if samples_per_class < 1:
        raise ConfigError("samples_per_class must be >= 1")
    protos = synthetic_prototypes(num_classes, side, rng)
    shaded = [_shade(p) for p in protos]
    jitter = max(1, side // 10)
    images = np.zeros((num_classes * samples_per_class, side, side, 3), dtype=np.uint8)
    labels = np.zeros(num_classes * samples_per_class, dtype=np.int64)
    i = 0
    for c in range(num_classes):
        for _ in range(samples_per_class):
            dy, dx = rng.integers(-jitter, jitter + 1, size=2)
            scale = rng.integers(200, 256) / 255.0
            glyph = _shift2d(shaded[c], int(dy), int(dx))
            plane = np.floor(scale * glyph + 0.5).astype(np.uint8)
            images[i] = plane[..., None]
            labels[i] = c
            i += 1
    return LabeledDataset(images, labels, num_classes)


class ExternalOracle(Oracle):
    """Adapter speaking line-delimited JSON to a child process.

    The child prints a handshake line on startup:
        {"protocol": 1, "concurrency_safe": <bool>}
    then answers one request per line. Request fields: id, height, width,
    count, pixels (base64 of count*height*width*3 raw bytes, sample-major
    row-major RGB). Response: {"id": <int>, "predictions": [<count> ints]}.
    """

    def __init__(self, command, timeout=60.0):
        if isinstance(command, str):
            argv = shlex.split(command)
        else:
            argv = [str(c) for c in command]
        if not argv:
            raise ConfigError("external oracle command is empty")
        self._timeout = float(timeout)
        self._lock = threading.Lock()
        self._buffer = b""
        self._next_id = 0
        self.command = argv
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,
                bufsize=0,
            )
        except OSError as exc:
            raise AdapterError(f"cannot start oracle command {argv!r}: {exc}") from exc
        handshake = self._read_response()
        if handshake.get("protocol") != PROTOCOL_VERSION:
            self.close()
            raise AdapterError(
                f"oracle handshake declared protocol {handshake.get('protocol')!r}, "
                f"expected {PROTOCOL_VERSION}"
            )
        self.concurrency_safe = bool(handshake.get("concurrency_safe", False))

    def _read_line(self):
        deadline = None if self._timeout is None else time.monotonic() + self._timeout
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buffer:
            remaining = None if deadline is None else deadline - time.monotonic()
            if remaining is not None and remaining <= 0:
                raise AdapterError(f"oracle timed out after {self._timeout}s")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise AdapterError(f"oracle timed out after {self._timeout}s")
            chunk = os.read(fd, 1 << 16)
            if not chunk:
                code = self._proc.poll()
                raise AdapterError(f"oracle process closed its output (exit code {code})")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line

    def _read_response(self):
        line = self._read_line()
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise AdapterError(f"oracle sent malformed JSON: {line[:200]!r}") from exc
        if not isinstance(doc, dict):
            raise AdapterError(f"oracle sent a non-object response: {line[:200]!r}")
        return doc

    def predict_batch(self, images):
        images = np.ascontiguousarray(images)
        count, height, width = images.shape[0], images.shape[1], images.shape[2]
        with self._lock:
            request_id = self._next_id
            self._next_id += 1
            request = {
                "id": request_id,
                "height": height,
                "width": width,
                "count": count,
                "pixels": base64.b64encode(images.tobytes()).decode("ascii"),
            }
            try:
                self._proc.stdin.write(json.dumps(request).encode("ascii") + b"\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise AdapterError(f"oracle process is gone: {exc}") from exc
            response = self._read_response()
        if "error" in response:
            raise AdapterError(f"oracle reported an error: {response['error']}")
        if response.get("id") != request_id:
            raise AdapterError(
                f"oracle answered id {response.get('id')!r} to request {request_id}"
            )
        preds = response.get("predictions")
        if not isinstance(preds, list) or len(preds) != count:
            raise AdapterError(
                f"oracle returned {0 if preds is None else len(preds)} predictions "
                f"for a batch of {count}"
            )
        try:
            return np.array([int(p) for p in preds], dtype=np.int64)
        except (TypeError, ValueError) as exc:
            raise AdapterError(f"oracle returned non-integer predictions: {exc}") from exc

    def close(self):
        proc = getattr(self, "_proc", None)
        if proc is None:
            return
        for stream in (proc.stdin, proc.stdout):
            if stream is not None:
                try:
                    stream.close()
                except OSError:
                    pass
        if proc.poll() is None:
            proc.terminate()
            try:
                proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass
