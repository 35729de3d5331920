"""Dense neural-network substrate: layers, forward pass, SGD training and a
binary weight format.

Tensors are plain ``numpy`` float64 arrays. Layers accept a single vector of
shape ``(in_dim,)`` or a batch of shape ``(n, in_dim)``.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

MAGIC = b"ASLW"
FORMAT_VERSION = 1


class ShapeError(ValueError):
    """Raised when an array does not have the dimension a layer expects."""

    def __init__(self, what: str, expected, actual):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected dimension {expected}, got {actual}")


class WeightFormatError(ValueError):
    """Malformed weight file. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class UnsupportedVersionError(WeightFormatError):
    pass


class Activation(enum.IntEnum):
    IDENTITY = 0
    RELU = 1
    SOFTMAX = 2


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def activate(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind == Activation.IDENTITY:
        return z
    if kind == Activation.RELU:
        return np.maximum(z, 0.0)
    if kind == Activation.SOFTMAX:
        return softmax(z)
    raise ValueError(f"unknown activation {kind!r}")


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy; ``labels`` are integer class indices."""
    logp = log_softmax(logits)
    return float(-logp[np.arange(len(labels)), labels].mean())


@dataclass
class DenseLayer:
    weights: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray  # (out_dim,)
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.activation = Activation(self.activation)
        if self.weights.ndim != 2:
            raise ShapeError("weights rank", 2, self.weights.ndim)
        if self.bias.shape != (self.weights.shape[1],):
            raise ShapeError("bias length", self.weights.shape[1], self.bias.shape)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    def pre_activation(self, x: np.ndarray) -> np.ndarray:
        """Affine part ``x @ W + b``."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ShapeError("layer input", self.in_dim, x.shape[-1])
        return x @ self.weights + self.bias

    def forward(self, x: np.ndarray) -> np.ndarray:
        return activate(self.activation, self.pre_activation(x))

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation)


@dataclass
class Network:
    layers: list[DenseLayer] = field(default_factory=list)

    def __post_init__(self):
        self.layers = list(self.layers)
        for i, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.out_dim != b.in_dim:
                raise ShapeError(f"layer {i + 1} input", a.out_dim, b.in_dim)

    @property
    def in_dim(self) -> int | None:
        return self.layers[0].in_dim if self.layers else None

    @property
    def out_dim(self) -> int | None:
        return self.layers[-1].out_dim if self.layers else None

    def copy(self) -> "Network":
        return Network([layer.copy() for layer in self.layers])


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Apply every layer of ``net`` in order. An empty network is the identity."""
    out = np.asarray(x, dtype=np.float64)
    if net.layers and out.shape[-1] != net.in_dim:
        raise ShapeError("network input", net.in_dim, out.shape[-1])
    for layer in net.layers:
        out = layer.forward(out)
    return out


def init_network(
    dims: Sequence[int], activations: Sequence[Activation], rng: np.random.Generator
) -> Network:
    """Build a dense network with weights uniform in ``[-1/sqrt(in), 1/sqrt(in)]``."""
    if len(activations) != len(dims) - 1:
        raise ValueError("need one activation per layer")
    layers = []
    for n_in, n_out, act in zip(dims[:-1], dims[1:], activations):
        bound = 1.0 / np.sqrt(n_in)
        w = rng.uniform(-bound, bound, size=(n_in, n_out))
        b = rng.uniform(-bound, bound, size=n_out)
        layers.append(DenseLayer(w, b, act))
    return Network(layers)


# ---------------------------------------------------------------- training


@dataclass
class LabeledDataset:
    x: np.ndarray  # (n, in_dim)
    labels: np.ndarray  # (n,) integer classes, or (n, C) one-hot

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        labels = np.asarray(self.labels)
        if labels.ndim == 2:
            labels = labels.argmax(axis=1)
        self.labels = labels.astype(np.int64)
        if len(self.x) != len(self.labels):
            raise ShapeError("label count", len(self.x), len(self.labels))

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 100
    learning_rate: float = 0.05
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.learning_rate <= 0 or self.epochs < 0 or self.seed < 0:
            raise ValueError(f"invalid training config {self}")


def _backward(net: Network, x: np.ndarray, labels: np.ndarray):
    """Gradients of mean cross-entropy w.r.t. every layer's (W, b).

    The last layer must be softmax; its gradient is fused with the loss.
    """
    acts = [x]
    pres = []
    for layer in net.layers:
        z = layer.pre_activation(acts[-1])
        pres.append(z)
        acts.append(activate(layer.activation, z))

    n = len(x)
    delta = acts[-1].copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if i != len(net.layers) - 1:
            if layer.activation == Activation.RELU:
                delta = delta * (pres[i] > 0)
            elif layer.activation == Activation.SOFTMAX:
                raise ValueError("softmax is only supported as the output layer")
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        delta = delta @ layer.weights.T
    return grads


def train_sgd(
    net: Network,
    data: LabeledDataset,
    cfg: TrainConfig,
    on_epoch: Callable[[int, float], None] | None = None,
) -> Network:
    """Mini-batch SGD on softmax cross-entropy. Returns a trained copy of ``net``.

    ``on_epoch(epoch, loss)`` receives the full-dataset loss after each epoch.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    if not net.layers or net.layers[-1].activation != Activation.SOFTMAX:
        raise ValueError("network must end in a softmax layer")
    if data.x.shape[1] != net.in_dim:
        raise ShapeError("dataset features", net.in_dim, data.x.shape[1])
    if data.labels.min() < 0 or data.labels.max() >= net.out_dim:
        raise ShapeError("label classes", net.out_dim, int(data.labels.max()) + 1)

    net = net.copy()
    rng = np.random.default_rng(cfg.seed)
    n = len(data)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            grads = _backward(net, data.x[idx], data.labels[idx])
            for layer, (gw, gb) in zip(net.layers, grads):
                layer.weights -= cfg.learning_rate * gw
                layer.bias -= cfg.learning_rate * gb
        if on_epoch is not None:
            on_epoch(epoch, dataset_loss(net, data))
    return net


def dataset_loss(net: Network, data: LabeledDataset) -> float:
    h = data.x
    for layer in net.layers[:-1]:
        h = layer.forward(h)
    return cross_entropy(net.layers[-1].pre_activation(h), data.labels)


def accuracy(net: Network, data: LabeledDataset) -> float:
    pred = np.argmax(forward(net, data.x), axis=1)
    return float(np.mean(pred == data.labels))


# ----------------------------------------------------------- serialization

_HEADER = struct.Struct("<4sII")
_LAYER = struct.Struct("<IIB")


def encode_network(net: Network) -> bytes:
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, len(net.layers))]
    for layer in net.layers:
        parts.append(_LAYER.pack(layer.in_dim, layer.out_dim, int(layer.activation)))
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    return b"".join(parts)


def _take(buf: bytes, offset: int, size: int, what: str) -> bytes:
    if offset + size > len(buf):
        raise WeightFormatError(f"truncated {what}: need {size} bytes", offset)
    return buf[offset : offset + size]


def decode_network(buf: bytes, offset: int = 0) -> tuple[Network, int]:
    """Parse one network starting at ``offset``; returns it and the end offset."""
    magic, version, count = _HEADER.unpack(_take(buf, offset, _HEADER.size, "header"))
    if magic != MAGIC:
        raise WeightFormatError(f"bad magic {magic!r}", offset)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}", offset + 4)
    offset += _HEADER.size
    layers = []
    for _ in range(count):
        n_in, n_out, tag = _LAYER.unpack(_take(buf, offset, _LAYER.size, "layer header"))
        try:
            act = Activation(tag)
        except ValueError:
            raise WeightFormatError(f"unknown activation tag {tag}", offset + 8) from None
        offset += _LAYER.size
        nbytes = 8 * n_in * n_out
        w = np.frombuffer(_take(buf, offset, nbytes, "weights"), dtype="<f8")
        offset += nbytes
        b = np.frombuffer(_take(buf, offset, 8 * n_out, "bias"), dtype="<f8")
        offset += 8 * n_out
        layers.append(
            DenseLayer(w.reshape(n_in, n_out).astype(np.float64), b.astype(np.float64), act)
        )
    try:
        return Network(layers), offset
    except ShapeError as exc:
        raise WeightFormatError(str(exc), offset) from None


def save_weights(net: Network, path) -> None:
    Path(path).write_bytes(encode_network(net))


def load_weights(path) -> Network:
    buf = Path(path).read_bytes()
    net, end = decode_network(buf)
    if end != len(buf):
        raise WeightFormatError("trailing bytes after network", end)
    return net
