"""Compact windowed trajectory regressor with externally supplied weights.

A plain feedforward net (tanh hidden layers, linear output) whose entire
parameter vector is handed in from outside, either generated by the hybrid
pipeline or trained classically.  Parameter placement is fixed: layers in
input-to-output order, each layer's weight matrix (out x in) row-major
followed by its bias, so placement and extraction are exact inverses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOSS_KINDS = ("mae", "mse")


@dataclass(frozen=True)
class NetSpec:
    input_width: int
    hidden_dims: tuple[int, ...]
    output_width: int

    def __post_init__(self):
        dims = tuple(int(d) for d in self.hidden_dims)
        if self.input_width < 1 or self.output_width < 1 or any(d < 1 for d in dims):
            raise ValueError("all layer widths must be positive")
        object.__setattr__(self, "hidden_dims", dims)

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_width, *self.hidden_dims, self.output_width)

    @property
    def total_params(self) -> int:
        dims = self.layer_dims
        return sum(din * dout + dout for din, dout in zip(dims[:-1], dims[1:]))


@dataclass
class TargetNet:
    spec: NetSpec
    weights: list[np.ndarray]  # (out, in) per layer
    biases: list[np.ndarray]


def param_slices(spec: NetSpec) -> list[tuple[slice, slice]]:
    """(weight_slice, bias_slice) per layer into the flat parameter vector."""
    dims = spec.layer_dims
    out = []
    pos = 0
    for din, dout in zip(dims[:-1], dims[1:]):
        w = slice(pos, pos + din * dout)
        pos += din * dout
        b = slice(pos, pos + dout)
        pos += dout
        out.append((w, b))
    return out


def build_net(spec: NetSpec, values: np.ndarray) -> TargetNet:
    """Place a flat parameter vector into layer matrices."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (spec.total_params,):
        raise ValueError(f"expected {spec.total_params} parameters, got shape {values.shape}")
    dims = spec.layer_dims
    weights, biases = [], []
    for (wsl, bsl), (din, dout) in zip(param_slices(spec), zip(dims[:-1], dims[1:])):
        weights.append(values[wsl].reshape(dout, din).copy())
        biases.append(values[bsl].copy())
    return TargetNet(spec, weights, biases)


def net_params(net: TargetNet) -> np.ndarray:
    """Inverse of build_net: extract the flat parameter vector."""
    parts = []
    for w, b in zip(net.weights, net.biases):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts)


def init_params(spec: NetSpec, seed: int) -> np.ndarray:
    """Seeded uniform fan-in initialisation for classical training; biases zero."""
    rng = np.random.default_rng(seed)
    dims = spec.layer_dims
    parts = []
    for din, dout in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(din)
        parts.append(rng.uniform(-bound, bound, size=din * dout))
        parts.append(np.zeros(dout))
    return np.concatenate(parts)


def forward_batch(net: TargetNet, features: np.ndarray) -> np.ndarray:
    """Evaluate a (batch, input_width) matrix of samples."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.spec.input_width:
        raise ValueError(f"features must have shape (batch, {net.spec.input_width}), got {x.shape}")
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        x = np.tanh(x @ w.T + b)
    return x @ net.weights[-1].T + net.biases[-1]


def forward(net: TargetNet, features: np.ndarray) -> np.ndarray:
    """Evaluate a single feature vector."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (net.spec.input_width,):
        raise ValueError(f"features must have shape {(net.spec.input_width,)}, got {features.shape}")
    return forward_batch(net, features[None, :])[0]


def loss(pred: np.ndarray, label: np.ndarray, kind: str = "mae") -> float:
    """Mean absolute or mean squared error over all entries."""
    pred = np.asarray(pred, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    if pred.shape != label.shape:
        raise ValueError(f"prediction shape {pred.shape} != label shape {label.shape}")
    diff = pred - label
    if kind == "mae":
        return float(np.mean(np.abs(diff)))
    if kind == "mse":
        return float(np.mean(diff**2))
    raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")


def loss_grad(pred: np.ndarray, label: np.ndarray, kind: str = "mae") -> np.ndarray:
    """dL/dpred for the mean losses; the MAE subgradient at zero is zero."""
    pred = np.asarray(pred, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    if pred.shape != label.shape:
        raise ValueError(f"prediction shape {pred.shape} != label shape {label.shape}")
    diff = pred - label
    if kind == "mae":
        return np.sign(diff) / diff.size
    if kind == "mse":
        return 2.0 * diff / diff.size
    raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")


def backward_batch(net: TargetNet, features: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
    """dL/d(flat params) given dL/dprediction for a batch, summed over rows.

    Ordering matches build_net placement exactly.
    """
    x = np.asarray(features, dtype=np.float64)
    cot = np.asarray(cotangent, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.spec.input_width:
        raise ValueError(f"features must have shape (batch, {net.spec.input_width}), got {x.shape}")
    if cot.shape != (x.shape[0], net.spec.output_width):
        raise ValueError(f"cotangent must have shape {(x.shape[0], net.spec.output_width)}, got {cot.shape}")

    acts = [x]
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        acts.append(np.tanh(acts[-1] @ w.T + b))

    n_layers = len(net.weights)
    grads = []
    delta = cot
    for idx in range(n_layers - 1, -1, -1):
        grads.append((delta.T @ acts[idx], delta.sum(axis=0)))
        if idx > 0:
            delta = (delta @ net.weights[idx]) * (1.0 - acts[idx] ** 2)
    grads.reverse()

    flat = np.empty(net.spec.total_params)
    for (wsl, bsl), (dw, db) in zip(param_slices(net.spec), grads):
        flat[wsl] = dw.ravel()
        flat[bsl] = db
    return flat


def backward(net: TargetNet, features: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
    """Single-sample form of backward_batch."""
    features = np.asarray(features, dtype=np.float64)
    cotangent = np.asarray(cotangent, dtype=np.float64)
    return backward_batch(net, features[None, :], cotangent[None, :])
