"""Builtin trainable classifier: a small fully connected network over
flattened pixels, with manual backpropagation and an adaptive-moment
optimizer. Everything runs in float64 numpy so training is bit-reproducible
for a fixed seed.
"""

import json
import struct

import numpy as np

from .errors import ConfigError, ModelFormatError

MODEL_MAGIC = b"SSMODEL"
MODEL_VERSION = 1


class MlpClassifier:
    """Multilayer perceptron on pixels scaled to [0, 1].

    Weights are initialized from a symmetric uniform distribution with
    bound 1/sqrt(fan_in); biases start at zero. The forward pass ends in a
    softmax, so predict_proba rows sum to one.
    """

    def __init__(self, input_side, num_classes, hidden=(128,), seed=0):
        if input_side < 1 or num_classes < 2:
            raise ConfigError("need input_side >= 1 and num_classes >= 2")
        self.input_side = int(input_side)
        self.num_classes = int(num_classes)
        self.hidden = tuple(int(h) for h in hidden)
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden layer widths must be positive")
        self.seed = int(seed)
        dims = [self.input_side * self.input_side * 3, *self.hidden, self.num_classes]
        rng = np.random.default_rng(self.seed)
        self.weights = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.weights.append(np.zeros(fan_out))

    @property
    def num_layers(self):
        return len(self.weights) // 2

    def _flatten(self, images):
        images = np.asarray(images)
        if images.ndim != 4:
            raise ConfigError(f"expected a (B, H, W, 3) batch, got shape {images.shape}")
        expected = (images.shape[0], self.input_side, self.input_side, 3)
        if images.shape != expected:
            raise ConfigError(f"batch shape {images.shape} does not match model {expected}")
        return images.reshape(images.shape[0], -1).astype(np.float64) / 255.0

    def _forward(self, x):
        """Returns (pre-activations, activations); activations[0] is the input."""
        activations = [x]
        zs = []
        a = x
        for layer in range(self.num_layers):
            w, b = self.weights[2 * layer], self.weights[2 * layer + 1]
            z = a @ w + b
            zs.append(z)
            a = np.maximum(z, 0.0) if layer < self.num_layers - 1 else z
            activations.append(a)
        return zs, activations

    def _log_softmax(self, logits):
        shifted = logits - logits.max(axis=1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def predict_proba(self, images):
        _, activations = self._forward(self._flatten(images))
        return np.exp(self._log_softmax(activations[-1]))

    def predict(self, images):
        _, activations = self._forward(self._flatten(images))
        return np.argmax(activations[-1], axis=1).astype(np.int64)

    def loss(self, images, labels):
        """Mean cross-entropy of the batch."""
        logp = self._log_softmax(self._forward(self._flatten(images))[1][-1])
        return float(-logp[np.arange(len(labels)), labels].mean())

    def loss_and_grads(self, images, labels):
        """Mean cross-entropy plus its gradient for every weight array."""
        labels = np.asarray(labels, dtype=np.int64)
        x = self._flatten(images)
        batch = x.shape[0]
        zs, activations = self._forward(x)
        logp = self._log_softmax(activations[-1])
        loss = float(-logp[np.arange(batch), labels].mean())
        delta = np.exp(logp)
        delta[np.arange(batch), labels] -= 1.0
        delta /= batch
        grads = [None] * len(self.weights)
        for layer in range(self.num_layers - 1, -1, -1):
            grads[2 * layer] = activations[layer].T @ delta
            grads[2 * layer + 1] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[2 * layer].T) * (zs[layer - 1] > 0)
        return loss, grads

    def flat_weights(self):
        return np.concatenate([w.ravel() for w in self.weights])

    def set_flat_weights(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        total = sum(w.size for w in self.weights)
        if flat.shape != (total,):
            raise ConfigError(f"expected {total} weights, got shape {flat.shape}")
        offset = 0
        for w in self.weights:
            w[...] = flat[offset : offset + w.size].reshape(w.shape)
            offset += w.size


class Adam:
    """Adaptive-moment estimation with bias correction."""

    def __init__(self, weights, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(w) for w in weights]
        self.v = [np.zeros_like(w) for w in weights]

    def step(self, weights, grads):
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for i, (w, g) in enumerate(zip(weights, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / correction1
            v_hat = self.v[i] / correction2
            w -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def save_model(model, path):
    """Write magic, version, architecture header, then float64 LE weights."""
    header = json.dumps(
        {
            "arch": "mlp",
            "input_side": model.input_side,
            "hidden": list(model.hidden),
            "num_classes": model.num_classes,
            "seed": model.seed,
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for w in model.weights:
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())


def load_model(path):
    """Inverse of save_model; the round trip is bit-exact."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MODEL_MAGIC) + 8 or not blob.startswith(MODEL_MAGIC):
        raise ModelFormatError(f"{path}: not a model file (bad magic bytes)")
    offset = len(MODEL_MAGIC)
    (version,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    if version != MODEL_VERSION:
        raise ModelFormatError(
            f"{path}: unsupported model format version {version}, expected {MODEL_VERSION}"
        )
    (header_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    if offset + header_len > len(blob):
        raise ModelFormatError(f"{path}: truncated model header")
    try:
        header = json.loads(blob[offset : offset + header_len])
        input_side = int(header["input_side"])
        hidden = tuple(int(h) for h in header["hidden"])
        num_classes = int(header["num_classes"])
        seed = int(header.get("seed", 0))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: corrupt model header: {exc}") from exc
    offset += header_len
    model = MlpClassifier(input_side, num_classes, hidden=hidden, seed=seed)
    expected = sum(w.size for w in model.weights) * 8
    payload = blob[offset:]
    if len(payload) != expected:
        raise ModelFormatError(
            f"{path}: expected {expected} weight bytes, found {len(payload)}"
        )
    flat = np.frombuffer(payload, dtype="<f8")
    model.set_flat_weights(flat)
    return model
