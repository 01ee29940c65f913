"""Feedforward sigmoid networks: specs, initialization, forward pass, label codes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from synswitch.errors import StructuralError

ACTIVATIONS = ("logistic-sigmoid",)


@dataclass(frozen=True)
class NetworkSpec:
    layer_sizes: tuple[int, ...]
    activation: str = "logistic-sigmoid"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise StructuralError(f"need at least 2 layers, got {sizes}")
        if any(s < 1 for s in sizes):
            raise StructuralError(f"layer sizes must be >= 1, got {sizes}")
        if self.activation not in ACTIVATIONS:
            raise StructuralError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def n_layers(self) -> int:
        """Number of connection layers (weight matrices)."""
        return len(self.layer_sizes) - 1

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def weight_shape(self, layer: int) -> tuple[int, int]:
        return (self.layer_sizes[layer + 1], self.layer_sizes[layer])

    def n_params(self) -> int:
        return sum(o * (i + 1) for i, o in zip(self.layer_sizes, self.layer_sizes[1:]))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Network:
    """Layered weights ``W[l]`` of shape (n_out, n_in) and biases ``b[l]``.

    Arrays are copied on construction and marked read-only; training and
    blending always build a new Network.
    """

    spec: NetworkSpec
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        ws = tuple(_frozen(w) for w in self.weights)
        bs = tuple(_frozen(b) for b in self.biases)
        if len(ws) != self.spec.n_layers or len(bs) != self.spec.n_layers:
            raise StructuralError(
                f"expected {self.spec.n_layers} layers, got {len(ws)} weights / {len(bs)} biases"
            )
        for l, (w, b) in enumerate(zip(ws, bs)):
            if w.shape != self.spec.weight_shape(l):
                raise StructuralError(f"W[{l}] has shape {w.shape}, expected {self.spec.weight_shape(l)}")
            if b.shape != (self.spec.layer_sizes[l + 1],):
                raise StructuralError(f"b[{l}] has shape {b.shape}, expected ({self.spec.layer_sizes[l + 1]},)")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise StructuralError(f"layer {l} contains non-finite values")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    def params(self) -> list[np.ndarray]:
        """Arrays in canonical order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def copy_arrays(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        return [w.copy() for w in self.weights], [b.copy() for b in self.biases]

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return self.spec == other.spec and all(
            np.array_equal(p, q) for p, q in zip(self.params(), other.params())
        )

    __hash__ = None


def init_network(spec: NetworkSpec, seed: int, half_range: float = 0.5) -> Network:
    """Uniform ``[-half_range, half_range]`` initialization.

    Draws come from ``numpy.random.default_rng(seed)`` (PCG64) in the order
    W0 (row-major), b0, W1, b1, ...
    """
    if not half_range > 0:
        raise ValueError(f"half_range must be > 0, got {half_range}")
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for l in range(spec.n_layers):
        ws.append(rng.uniform(-half_range, half_range, size=spec.weight_shape(l)))
        bs.append(rng.uniform(-half_range, half_range, size=spec.layer_sizes[l + 1]))
    return Network(spec, tuple(ws), tuple(bs))


def zeros_network(spec: NetworkSpec) -> Network:
    return Network(
        spec,
        tuple(np.zeros(spec.weight_shape(l)) for l in range(spec.n_layers)),
        tuple(np.zeros(spec.layer_sizes[l + 1]) for l in range(spec.n_layers)),
    )


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def forward(net: Network, x) -> list[np.ndarray]:
    """Activation trace for one input; entry 0 is the input itself."""
    a = np.asarray(x, dtype=np.float64)
    if a.shape != (net.spec.n_inputs,):
        raise StructuralError(f"input has shape {a.shape}, network expects ({net.spec.n_inputs},)")
    trace = [a]
    for w, b in zip(net.weights, net.biases):
        a = sigmoid(w @ a + b)
        trace.append(a)
    return trace


def forward_batch(net: Network, X) -> list[np.ndarray]:
    """Row-per-pattern version of :func:`forward`."""
    a = np.asarray(X, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.spec.n_inputs:
        raise StructuralError(f"inputs have shape {a.shape}, network expects (n, {net.spec.n_inputs})")
    trace = [a]
    for w, b in zip(net.weights, net.biases):
        a = sigmoid(a @ w.T + b)
        trace.append(a)
    return trace


@dataclass(frozen=True)
class LabelCodec:
    """Maps class indices to target bit vectors in a slice of the output layer.

    ``kind`` is ``"binary"`` (class index in ``width`` bits, MSB first) or
    ``"onehot"`` (``width == n_classes``).
    """

    name: str
    kind: str
    n_classes: int
    offset: int = 0
    width: int = 0
    codebook: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_classes < 1:
            raise StructuralError("codec needs at least one class")
        if self.kind == "binary":
            min_width = max(1, int(self.n_classes - 1).bit_length())
            width = self.width or min_width
            if width < min_width:
                raise StructuralError(f"{width} bits cannot code {self.n_classes} classes")
            shifts = np.arange(width - 1, -1, -1)
            book = (np.arange(self.n_classes)[:, None] >> shifts) & 1
        elif self.kind == "onehot":
            width = self.width or self.n_classes
            if width != self.n_classes:
                raise StructuralError("one-hot width must equal the class count")
            book = np.eye(self.n_classes)
        else:
            raise StructuralError(f"unknown codec kind {self.kind!r}")
        if self.offset < 0:
            raise StructuralError("codec offset must be >= 0")
        object.__setattr__(self, "width", width)
        book = book.astype(np.float64)
        book.setflags(write=False)
        object.__setattr__(self, "codebook", book)

    @property
    def stop(self) -> int:
        return self.offset + self.width

    def encode(self, c: int) -> np.ndarray:
        if not 0 <= c < self.n_classes:
            raise StructuralError(f"class {c} outside [0, {self.n_classes})")
        return self.codebook[c].copy()

    def region(self, output) -> np.ndarray:
        output = np.asarray(output, dtype=np.float64)
        if output.shape[-1] < self.stop:
            raise StructuralError(
                f"output width {output.shape[-1]} too small for codec {self.name!r} ending at {self.stop}"
            )
        return output[..., self.offset:self.stop]

    def decode(self, output) -> int:
        return decode(output, self)

    def decode_batch(self, outputs) -> np.ndarray:
        sub = self.region(outputs)
        d2 = ((sub[:, None, :] - self.codebook[None, :, :]) ** 2).sum(axis=2)
        # argmin returns the first minimum, i.e. the lowest class index on ties
        return np.argmin(d2, axis=1)


def decode(output, codec: LabelCodec) -> int:
    """Nearest codeword (Euclidean, raw analog outputs); ties go to the lowest class."""
    sub = codec.region(output)
    if sub.ndim != 1:
        raise StructuralError("decode expects a single output vector")
    d2 = ((codec.codebook - sub) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def identity_codec(n_identities: int, offset: int = 0, width: int = 0) -> LabelCodec:
    return LabelCodec("identity", "binary", n_identities, offset, width)


def emotion_codec(n_emotions: int, offset: int = 0) -> LabelCodec:
    return LabelCodec("emotion", "onehot", n_emotions, offset)


def check_codecs(codecs: Sequence[LabelCodec], n_outputs: int) -> None:
    """Codec regions must be disjoint and fit inside the output layer."""
    used = np.zeros(n_outputs, dtype=bool)
    for c in codecs:
        if c.stop > n_outputs:
            raise StructuralError(f"codec {c.name!r} ends at {c.stop} > output size {n_outputs}")
        if used[c.offset:c.stop].any():
            raise StructuralError(f"codec {c.name!r} overlaps another codec")
        used[c.offset:c.stop] = True


def codec_mask(codec: LabelCodec, n_outputs: int) -> np.ndarray:
    mask = np.zeros(n_outputs, dtype=bool)
    mask[codec.offset:codec.stop] = True
    return mask
