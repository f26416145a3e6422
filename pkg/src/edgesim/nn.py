"""Small dense feed-forward network with hand-written backprop and SGD.

Parameter file layout (little-endian):

    magic  b"EDGN"
    uint32 version (=1)
    uint32 layer count
    per layer: uint32 rows, uint32 cols, uint32 activation (0=linear, 1=relu),
               rows*cols float64 weights (row-major), rows float64 biases

Layers are stored input-to-output. A weight matrix has shape (out, in).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LINEAR = "linear"
RELU = "relu"
_ACT_CODE = {LINEAR: 0, RELU: 1}
_CODE_ACT = {v: k for k, v in _ACT_CODE.items()}
MAGIC = b"EDGN"
VERSION = 1


class DimensionMismatch(ValueError):
    pass


class ArchitectureMismatch(ValueError):
    pass


@dataclass
class SgdConfig:
    learning_rate: float = 1e-4
    clip_norm: float | None = 10.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be nonnegative")


class DenseNetwork:
    def __init__(self, weights, biases, activations):
        if not (len(weights) == len(biases) == len(activations)) or not weights:
            raise ArchitectureMismatch("weights, biases and activations must be non-empty and aligned")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape[0] != b.shape[0]:
                raise ArchitectureMismatch(f"layer {i}: bias width {b.shape[0]} != {w.shape[0]}")
            if i and weights[i - 1].shape[0] != w.shape[1]:
                raise ArchitectureMismatch(f"layer {i}: input width {w.shape[1]} != {weights[i - 1].shape[0]}")
        if activations[-1] != LINEAR:
            raise ArchitectureMismatch("output activation must be linear")
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        self.activations = list(activations)

    @classmethod
    def build(cls, sizes, rng: np.random.Generator, hidden_activation: str = RELU) -> "DenseNetwork":
        """Glorot-uniform weights, zero biases; relu on hidden layers, linear output."""
        weights, biases, acts = [], [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
            acts.append(hidden_activation)
        acts[-1] = LINEAR
        return cls(weights, biases, acts)

    @property
    def input_width(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_width(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def sizes(self) -> list[int]:
        return [self.input_width] + [w.shape[0] for w in self.weights]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward(self, x) -> np.ndarray:
        """Q-values for one input vector (1-D) or a batch (rows)."""
        a = np.asarray(x, dtype=float)
        if a.shape[-1] != self.input_width:
            raise DimensionMismatch(f"input width {a.shape[-1]} != {self.input_width}")
        for w, b, act in zip(self.weights, self.biases, self.activations):
            a = a @ w.T + b
            if act == RELU:
                a = np.maximum(a, 0.0)
        return a

    def _forward_cache(self, x):
        acts = [x]
        pre = []
        a = x
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = a @ w.T + b
            pre.append(z)
            a = np.maximum(z, 0.0) if act == RELU else z
            acts.append(a)
        return pre, acts

    def backward_batch(self, xs, actions, targets):
        """Gradients of mean 0.5*(Q(x_i, a_i) - y_i)^2 over the batch.

        Returns (gradients, td_errors) where gradients follow `parameters()` order.
        """
        x = np.atleast_2d(np.asarray(xs, dtype=float))
        if x.shape[1] != self.input_width:
            raise DimensionMismatch(f"input width {x.shape[1]} != {self.input_width}")
        actions = np.asarray(actions, dtype=int).reshape(-1)
        targets = np.asarray(targets, dtype=float).reshape(-1)
        if np.any(actions < 0) or np.any(actions >= self.output_width):
            raise DimensionMismatch("action index outside the output layer")
        m = x.shape[0]
        pre, acts = self._forward_cache(x)
        rows = np.arange(m)
        td = acts[-1][rows, actions] - targets
        delta = np.zeros_like(acts[-1])
        delta[rows, actions] = td / m
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            if self.activations[i] == RELU:
                delta = delta * (pre[i] > 0)
            grads[2 * i] = delta.T @ acts[i]
            grads[2 * i + 1] = delta.sum(axis=0)
            if i:
                delta = delta @ self.weights[i]
        return grads, td

    def backward(self, x, target_index: int, target_value: float):
        grads, _ = self.backward_batch(np.asarray(x, dtype=float)[None, :], [target_index], [target_value])
        return grads

    def sgd_step(self, grads, config: SgdConfig) -> None:
        params = self.parameters()
        if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
            raise DimensionMismatch("gradient shapes do not match parameters")
        scale = config.learning_rate
        if config.clip_norm is not None:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if norm > config.clip_norm:
                scale *= config.clip_norm / norm
        for p, g in zip(params, grads):
            p -= scale * g

    def copy_from(self, source: "DenseNetwork") -> None:
        copy_parameters(source, self)

    def clone(self) -> "DenseNetwork":
        return DenseNetwork([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                            self.activations)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", VERSION, len(self.weights)))
            for w, b, act in zip(self.weights, self.biases, self.activations):
                fh.write(struct.pack("<III", w.shape[0], w.shape[1], _ACT_CODE[act]))
                fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "DenseNetwork":
        data = Path(path).read_bytes()
        if data[:4] != MAGIC:
            raise ValueError(f"{path}: not a parameter file")
        version, n_layers = struct.unpack_from("<II", data, 4)
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        off = 12
        weights, biases, acts = [], [], []
        for _ in range(n_layers):
            rows, cols, code = struct.unpack_from("<III", data, off)
            off += 12
            w = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=off).reshape(rows, cols)
            off += 8 * rows * cols
            b = np.frombuffer(data, dtype="<f8", count=rows, offset=off)
            off += 8 * rows
            weights.append(w.astype(float))
            biases.append(b.astype(float))
            acts.append(_CODE_ACT[code])
        return cls(weights, biases, acts)


def copy_parameters(source: DenseNetwork, destination: DenseNetwork) -> None:
    if source.sizes != destination.sizes or source.activations != destination.activations:
        raise ArchitectureMismatch(f"{source.sizes} vs {destination.sizes}")
    for i in range(len(source.weights)):
        destination.weights[i][...] = source.weights[i]
        destination.biases[i][...] = source.biases[i]
