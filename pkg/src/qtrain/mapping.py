"""The classical mapping network: (basis bits, probability) -> parameter chunk.

A small MLP with fixed hidden widths [32, 32]; the input is the N basis bits
(presented raw as 0.0/1.0, not rescaled) concatenated with the measurement
probability, the output is one chunk of ``chunk_size`` generated parameters.
Hidden layers use tanh, the output layer is linear scaled by ``output_gain``
(default 1.0).  One model is shared across all chunks.

Weights and biases live in a single flat vector: per layer, the weight
matrix (out x in) row-major, then the bias.  Hidden weights are initialised
uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

HIDDEN_DIMS = (32, 32)

_FORMAT_TAG = "qtrain-mapping-v1"


@dataclass
class MappingModel:
    layer_dims: tuple[int, ...]  # (N+1, 32, 32, chunk_size)
    params: np.ndarray           # flat weights-and-biases vector
    output_gain: float = 1.0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"bad layer_dims {dims}")
        params = np.asarray(self.params, dtype=np.float64)
        expected = param_count(dims)
        if params.shape != (expected,):
            raise ValueError(f"params must be a flat vector of length {expected}, got shape {params.shape}")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "params", params)

    @property
    def input_width(self) -> int:
        return self.layer_dims[0]

    @property
    def output_width(self) -> int:
        return self.layer_dims[-1]

    @property
    def num_params(self) -> int:
        return self.params.size

    def with_params(self, params: np.ndarray) -> "MappingModel":
        return replace(self, params=params)


def param_count(layer_dims) -> int:
    """Total weight+bias count for consecutive layer dims."""
    return sum(din * dout + dout for din, dout in zip(layer_dims[:-1], layer_dims[1:]))


def init_mapping(num_qubits: int, chunk_size: int, seed: int, output_gain: float = 1.0) -> MappingModel:
    """Seeded uniform fan-in init; biases zero; deterministic for a fixed seed."""
    if num_qubits < 1:
        raise ValueError(f"num_qubits must be >= 1, got {num_qubits}")
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    dims = (num_qubits + 1, *HIDDEN_DIMS, chunk_size)
    rng = np.random.default_rng(seed)
    parts = []
    for din, dout in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(din)
        parts.append(rng.uniform(-bound, bound, size=din * dout))
        parts.append(np.zeros(dout))
    return MappingModel(dims, np.concatenate(parts), output_gain)


def _layers(model: MappingModel):
    """Views (weight, bias) per layer into the flat parameter vector."""
    dims = model.layer_dims
    out = []
    pos = 0
    for din, dout in zip(dims[:-1], dims[1:]):
        w = model.params[pos : pos + din * dout].reshape(dout, din)
        pos += din * dout
        b = model.params[pos : pos + dout]
        pos += dout
        out.append((w, b))
    return out


def forward_batch(model: MappingModel, bits: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Evaluate many (bit-string, probability) inputs at once.

    ``bits`` has shape (batch, N) with 0/1 entries, ``probs`` shape (batch,).
    Returns (batch, chunk_size).
    """
    bits = np.asarray(bits, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    x = np.concatenate([bits, probs[:, None]], axis=1)
    if x.shape[1] != model.input_width:
        raise ValueError(f"input width {x.shape[1]} != model input width {model.input_width}")
    layers = _layers(model)
    for w, b in layers[:-1]:
        x = np.tanh(x @ w.T + b)
    w, b = layers[-1]
    return model.output_gain * (x @ w.T + b)


def backward_batch(
    model: MappingModel, bits: np.ndarray, probs: np.ndarray, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Reverse-mode pass over a batch.

    Returns ``(grad_params, grad_probs)``: the parameter gradient summed over
    the batch (flat, same layout as ``model.params``) and the per-row
    gradient w.r.t. the probability input.  The bits are constants.
    """
    bits = np.asarray(bits, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (bits.shape[0], model.output_width):
        raise ValueError(
            f"upstream must have shape {(bits.shape[0], model.output_width)}, got {upstream.shape}"
        )
    x = np.concatenate([bits, probs[:, None]], axis=1)
    if x.shape[1] != model.input_width:
        raise ValueError(f"input width {x.shape[1]} != model input width {model.input_width}")

    layers = _layers(model)
    acts = [x]
    for w, b in layers[:-1]:
        acts.append(np.tanh(acts[-1] @ w.T + b))

    grad_flat = np.zeros_like(model.params)
    grads = []  # per-layer (dW, db), collected output-to-input
    delta = model.output_gain * upstream
    for idx in range(len(layers) - 1, -1, -1):
        w, _ = layers[idx]
        grads.append((delta.T @ acts[idx], delta.sum(axis=0)))
        delta = delta @ w
        if idx > 0:
            delta = delta * (1.0 - acts[idx] ** 2)
    grads.reverse()

    pos = 0
    for (dw, db), (w, _) in zip(grads, layers):
        grad_flat[pos : pos + w.size] = dw.ravel()
        pos += w.size
        grad_flat[pos : pos + db.size] = db
        pos += db.size
    return grad_flat, delta[:, -1].copy()


def _check_inputs(model: MappingModel, basis_bits, prob: float) -> tuple[np.ndarray, float]:
    bits = np.asarray(basis_bits, dtype=np.float64)
    if bits.ndim != 1 or bits.size != model.input_width - 1:
        raise ValueError(f"expected {model.input_width - 1} bits, got shape {bits.shape}")
    if not np.all((bits == 0.0) | (bits == 1.0)):
        raise ValueError("basis bits must be 0 or 1")
    prob = float(prob)
    if not 0.0 <= prob <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {prob}")
    return bits, prob


def map_forward(model: MappingModel, basis_bits, prob: float) -> np.ndarray:
    """Generate one chunk of parameters from a single (bits, probability) pair."""
    bits, prob = _check_inputs(model, basis_bits, prob)
    return forward_batch(model, bits[None, :], np.array([prob]))[0]


def map_backward(model: MappingModel, basis_bits, prob: float, upstream) -> tuple[np.ndarray, float]:
    """Gradients of a scalar loss w.r.t. the model parameters and the probability.

    ``upstream`` is dL/dchunk for this chunk; accumulation across chunks is
    the caller's job.
    """
    bits, prob = _check_inputs(model, basis_bits, prob)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (model.output_width,):
        raise ValueError(f"upstream must have shape {(model.output_width,)}, got {upstream.shape}")
    grad_flat, grad_probs = backward_batch(model, bits[None, :], np.array([prob]), upstream[None, :])
    return grad_flat, float(grad_probs[0])


def save_mapping(model: MappingModel, path) -> None:
    """Textual dump: one header line with dims and gain, then one value per line."""
    with open(path, "w", encoding="ascii") as fh:
        dims = ",".join(str(d) for d in model.layer_dims)
        fh.write(f"{_FORMAT_TAG} dims={dims} gain={float(model.output_gain)!r}\n")
        for v in model.params:
            fh.write(f"{float(v)!r}\n")


def load_mapping(path) -> MappingModel:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != _FORMAT_TAG:
            raise ValueError(f"unrecognised mapping file header: {' '.join(header)!r}")
        dims = tuple(int(d) for d in header[1].removeprefix("dims=").split(","))
        gain = float(header[2].removeprefix("gain="))
        values = np.array([float(line) for line in fh], dtype=np.float64)
    return MappingModel(dims, values, gain)
