"""Training loops for every benchmark mode, evaluation, sweeps and reports.

Modes: ``full`` (classical training of the whole forecaster), ``qt`` (the
circuit and mapping network generate all forecaster weights and only their
own parameters are trained), ``qpa`` (the hybrid pipeline generates low-rank
factors for the last linear layers of a frozen base net; earlier layers get
classically trained low-rank factors, reported as a separate pool), and the
compression baselines ``prune`` and ``share`` (dense training, one-shot
compression, then retraining under the compression constraint).

The published update rule is written with a plus sign in front of the
gradient step; since training is expected to reduce the loss, parameters
descend here (theta <- theta - lr * grad), and that sign convention is used
for every optimizer.

Reports are split into byte-reproducible CSVs (epoch curves, summary rows;
no timestamps, floats written with repr) and a JSON manifest carrying the
config echo, the input content hash and the wall-clock time.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import forecaster
from .baselines import (
    PruneMask,
    ShareCodebook,
    cluster_mean_grads,
    codebook_values,
    prune_magnitude,
    trainable_count,
    weight_share,
)
from .circuit import GRAD_METHODS, CircuitSpec
from .data import (
    EARTH_RADIUS_KM,
    FEATURES_PER_STEP,
    LAT_SCALE,
    LON_SCALE,
    ForecastSample,
    Track,
    great_circle_arrays,
    make_windows,
    split_by_year,
)
from .forecaster import (
    LOSS_KINDS,
    NetSpec,
    TargetNet,
    build_net,
    forward_batch,
    loss,
    loss_grad,
    net_params,
    param_slices,
)
from .lora import LoraTarget, assemble_lora, lora_grad, lora_param_count
from .mapping import MappingModel, init_mapping
from .paramgen import ChunkPlan, HybridParams, backprop_to_hybrid, generate_params, plan_chunks

log = logging.getLogger(__name__)

MODES = ("full", "qt", "qpa", "prune", "share")
OPTIMIZERS = ("sgd", "adam")

CHECKPOINT_FORMAT = "qtrain-checkpoint-v1"

SUMMARY_COLUMNS = [
    "mode", "seed", "epochs", "trainable_count", "aux_trainable_count",
    "qubits", "circuit_layers", "chunk_size", "final_train_loss",
    "final_val_loss", "test_mae", "gc_mean_km", "gc_median_km", "test_samples",
]

SWEEP_COLUMNS = [
    "run_id", "status", "mode", "seed", "chunk_size", "circuit_layers",
    "qubits", "trainable_count", "test_mae", "gc_mean_km", "error",
]


class NonFiniteLossError(RuntimeError):
    """Raised when a training step produces a NaN or infinite loss."""

    def __init__(self, message: str, *, loss_value: float, param_norm: float,
                 epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.loss_value = loss_value
        self.param_norm = param_norm
        self.epoch = epoch
        self.batch = batch


# ---------------------------------------------------------------------------
# Configuration and reports
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    mode: str = "full"
    learning_rate: float = 0.01
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    optimizer: str = "adam"
    loss: str = "mae"
    window: int = 4
    horizon: int = 1
    hidden_dims: tuple[int, ...] = (64, 32)
    # hybrid generation
    chunk_size: int = 8
    num_layers: int = 4
    grad_method: str = "exact-adjoint"
    # low-rank adaptation
    rank: int = 4
    lora_scaling: float = 1.0
    target_layers: int = 2
    # baselines
    sparsity: float = 0.5
    clusters: int = 64
    # data handling
    train_years: tuple[int, int] = (2000, 2014)
    test_years: tuple[int, int] = (2015, 2018)
    val_fraction: float = 0.1
    earth_radius_km: float = EARTH_RADIUS_KM

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        if self.window < 1 or self.horizon < 1:
            raise ValueError("window and horizon must be >= 1")
        if self.chunk_size < 1 or self.num_layers < 1:
            raise ValueError("chunk_size and num_layers must be >= 1")
        if self.grad_method not in GRAD_METHODS:
            raise ValueError(f"grad_method must be one of {GRAD_METHODS}")
        if self.rank < 1 or self.target_layers < 1:
            raise ValueError("rank and target_layers must be >= 1")
        if not 0.0 <= self.sparsity < 1.0:
            raise ValueError(f"sparsity must lie in [0, 1), got {self.sparsity}")
        if self.clusters < 1:
            raise ValueError(f"clusters must be >= 1, got {self.clusters}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")
        if self.earth_radius_km <= 0:
            raise ValueError("earth_radius_km must be positive")

    @property
    def netspec(self) -> NetSpec:
        return NetSpec(self.window * FEATURES_PER_STEP, tuple(self.hidden_dims), 2 * self.horizon)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("hidden_dims", "train_years", "test_years"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(data)
        for key in ("hidden_dims", "train_years", "test_years"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class RunReport:
    mode: str
    seed: int
    trainable_count: int
    aux_trainable_count: int
    qubits: int | None
    circuit_layers: int | None
    chunk_size: int | None
    epochs: list[tuple[int, float, float | None]]  # (epoch, train_loss, val_loss)
    final_train_loss: float
    final_val_loss: float | None
    test_mae: float | None
    gc_mean_km: float | None
    gc_median_km: float | None
    gc_per_horizon_km: list[float]
    test_samples: int
    wall_clock_s: float
    config: dict = field(default_factory=dict)

    def summary_row(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "epochs": len(self.epochs),
            "trainable_count": self.trainable_count,
            "aux_trainable_count": self.aux_trainable_count,
            "qubits": self.qubits,
            "circuit_layers": self.circuit_layers,
            "chunk_size": self.chunk_size,
            "final_train_loss": self.final_train_loss,
            "final_val_loss": self.final_val_loss,
            "test_mae": self.test_mae,
            "gc_mean_km": self.gc_mean_km,
            "gc_median_km": self.gc_median_km,
            "test_samples": self.test_samples,
        }


# ---------------------------------------------------------------------------
# Optimizers (descent convention: params - lr * step)
# ---------------------------------------------------------------------------

class Sgd:
    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        return params - self.learning_rate * grads


class Adam:
    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grads**2
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind: str, learning_rate: float):
    if kind == "sgd":
        return Sgd(learning_rate)
    if kind == "adam":
        return Adam(learning_rate)
    raise ValueError(f"unknown optimizer {kind!r}; expected one of {OPTIMIZERS}")


def _ensure_finite(value: float, param_norm: float) -> None:
    if not np.isfinite(value):
        raise NonFiniteLossError(
            f"non-finite loss {value!r} (parameter norm {param_norm:.6g})",
            loss_value=float(value), param_norm=float(param_norm),
        )


# ---------------------------------------------------------------------------
# The hybrid update step
# ---------------------------------------------------------------------------

def hybrid_step(
    circuit: CircuitSpec,
    mapping: MappingModel,
    plan: ChunkPlan,
    netspec: NetSpec,
    features: np.ndarray,
    labels: np.ndarray,
    *,
    loss_kind: str,
    optimizer,
    grad_method: str = "exact-adjoint",
) -> tuple[CircuitSpec, MappingModel, float]:
    """One generate -> forward -> loss -> backprop -> update cycle.

    Returns the updated (circuit, mapping) pair and the pre-update batch
    loss.  Raises NonFiniteLossError if the loss is NaN or infinite.
    """
    values = generate_params(circuit, mapping, plan)
    net = build_net(netspec, values)
    preds = forward_batch(net, features)
    batch_loss = loss(preds, labels, loss_kind)
    _ensure_finite(batch_loss, float(np.linalg.norm(circuit.params)))
    cot = loss_grad(preds, labels, loss_kind)
    grad_values = forecaster.backward_batch(net, features, cot)
    grad_angles, grad_mapping = backprop_to_hybrid(circuit, mapping, plan, grad_values, method=grad_method)

    flat = np.concatenate([circuit.params.ravel(), mapping.params])
    grads = np.concatenate([grad_angles.ravel(), grad_mapping])
    updated = optimizer.step(flat, grads)
    n_angles = circuit.num_params
    new_circuit = CircuitSpec(
        circuit.num_qubits, circuit.num_layers,
        updated[:n_angles].reshape(circuit.num_layers, circuit.num_qubits),
    )
    return new_circuit, mapping.with_params(updated[n_angles:]), batch_loss


# ---------------------------------------------------------------------------
# Mode states: each exposes step(X, Y) -> loss and net() -> TargetNet
# ---------------------------------------------------------------------------

class _DenseState:
    """Classical training of the raw parameter vector."""

    def __init__(self, netspec: NetSpec, params: np.ndarray, optimizer, loss_kind: str):
        self.netspec = netspec
        self.params = params
        self.optimizer = optimizer
        self.loss_kind = loss_kind
        self.trainable = netspec.total_params
        self.aux_trainable = 0

    def _grads(self, X, Y) -> tuple[float, np.ndarray]:
        net = build_net(self.netspec, self.params)
        preds = forward_batch(net, X)
        value = loss(preds, Y, self.loss_kind)
        _ensure_finite(value, float(np.linalg.norm(self.params)))
        cot = loss_grad(preds, Y, self.loss_kind)
        return value, forecaster.backward_batch(net, X, cot)

    def step(self, X, Y) -> float:
        value, grads = self._grads(X, Y)
        self.params = self.optimizer.step(self.params, grads)
        return value

    def net(self) -> TargetNet:
        return build_net(self.netspec, self.params)

    def checkpoint_extras(self) -> dict:
        return {}


class _MaskedState(_DenseState):
    """Retraining of pruning survivors; pruned entries stay exactly zero."""

    def __init__(self, netspec, params, optimizer, loss_kind, prune_state: PruneMask):
        super().__init__(netspec, params * prune_state.mask, optimizer, loss_kind)
        self.prune_state = prune_state
        self.trainable = trainable_count(prune_state)

    def step(self, X, Y) -> float:
        value, grads = self._grads(X, Y)
        self.params = self.optimizer.step(self.params, grads * self.prune_state.mask)
        self.params = self.params * self.prune_state.mask
        return value

    def checkpoint_extras(self) -> dict:
        return {
            "mask": self.prune_state.mask.astype(int).tolist(),
            "sparsity": self.prune_state.sparsity,
        }


class _SharedState:
    """Retraining of a weight-sharing codebook: only centroids move."""

    def __init__(self, netspec, codebook: ShareCodebook, optimizer, loss_kind):
        self.netspec = netspec
        self.codebook = codebook
        self.optimizer = optimizer
        self.loss_kind = loss_kind
        self.trainable = trainable_count(codebook)
        self.aux_trainable = 0

    def step(self, X, Y) -> float:
        net = build_net(self.netspec, codebook_values(self.codebook))
        preds = forward_batch(net, X)
        value = loss(preds, Y, self.loss_kind)
        _ensure_finite(value, float(np.linalg.norm(self.codebook.centroids)))
        cot = loss_grad(preds, Y, self.loss_kind)
        grad_values = forecaster.backward_batch(net, X, cot)
        grad_centroids = cluster_mean_grads(self.codebook, grad_values)
        self.codebook = ShareCodebook(
            self.optimizer.step(self.codebook.centroids, grad_centroids),
            self.codebook.assignments,
        )
        return value

    def net(self) -> TargetNet:
        return build_net(self.netspec, codebook_values(self.codebook))

    def checkpoint_extras(self) -> dict:
        return {
            "centroids": self.codebook.centroids.tolist(),
            "assignments": self.codebook.assignments.tolist(),
        }


class _QtState:
    """Hybrid generation of the full forecaster parameter vector."""

    def __init__(self, netspec: NetSpec, config: TrainConfig, init_seed: int):
        self.netspec = netspec
        self.loss_kind = config.loss
        self.grad_method = config.grad_method
        self.plan = plan_chunks(netspec.total_params, config.chunk_size)
        rng = np.random.default_rng(init_seed)
        angles = rng.uniform(0.0, np.pi, size=(config.num_layers, self.plan.num_qubits))
        self.circuit = CircuitSpec(self.plan.num_qubits, config.num_layers, angles)
        self.mapping = init_mapping(self.plan.num_qubits, config.chunk_size,
                                    int(rng.integers(2**31)))
        self.optimizer = make_optimizer(config.optimizer, config.learning_rate)
        self.trainable = trainable_count(HybridParams(self.circuit, self.mapping))
        self.aux_trainable = 0

    def step(self, X, Y) -> float:
        self.circuit, self.mapping, value = hybrid_step(
            self.circuit, self.mapping, self.plan, self.netspec, X, Y,
            loss_kind=self.loss_kind, optimizer=self.optimizer,
            grad_method=self.grad_method,
        )
        return value

    def net(self) -> TargetNet:
        return build_net(self.netspec, generate_params(self.circuit, self.mapping, self.plan))

    def checkpoint_extras(self) -> dict:
        return {
            "circuit_angles": self.circuit.params.tolist(),
            "mapping_dims": list(self.mapping.layer_dims),
            "mapping_params": self.mapping.params.tolist(),
            "mapping_gain": self.mapping.output_gain,
        }


class _QpaState:
    """Low-rank adaptation of a frozen base net.

    The hybrid pipeline generates the factors of the last ``target_layers``
    linear layers; every earlier layer receives classically trained factors
    (a separate, separately reported parameter pool).  Base weights and all
    biases stay frozen.  The configured rank is clamped per layer to
    min(out_dim, in_dim) so narrow output layers stay legal.
    """

    def __init__(self, netspec: NetSpec, config: TrainConfig, init_seed: int):
        self.netspec = netspec
        self.loss_kind = config.loss
        self.grad_method = config.grad_method
        self.scaling = config.lora_scaling

        rng = np.random.default_rng(init_seed)
        self.base_params = forecaster.init_params(netspec, int(rng.integers(2**31)))
        base_net = build_net(netspec, self.base_params)
        self.base_weights = base_net.weights
        self.base_biases = base_net.biases

        dims = netspec.layer_dims
        n_layers = len(dims) - 1
        n_quantum = min(config.target_layers, n_layers)
        self.quantum_layers = list(range(n_layers - n_quantum, n_layers))
        self.classical_layers = list(range(n_layers - n_quantum))
        self.layer_ranks = [
            min(config.rank, dims[layer + 1], dims[layer]) for layer in range(n_layers)
        ]

        self.quantum_counts = [
            lora_param_count(dims[layer + 1], dims[layer], self.layer_ranks[layer])
            for layer in self.quantum_layers
        ]
        self.plan = plan_chunks(sum(self.quantum_counts), config.chunk_size)
        angles = rng.uniform(0.0, np.pi, size=(config.num_layers, self.plan.num_qubits))
        self.circuit = CircuitSpec(self.plan.num_qubits, config.num_layers, angles)
        self.mapping = init_mapping(self.plan.num_qubits, config.chunk_size,
                                    int(rng.integers(2**31)))

        # classical factors: seeded down projection, zero up projection, so
        # the adapted net starts at the base net for these layers
        self.classical_factors: list[tuple[np.ndarray, np.ndarray]] = []
        for layer in self.classical_layers:
            d, k = dims[layer + 1], dims[layer]
            rank = self.layer_ranks[layer]
            down = rng.uniform(-1.0 / np.sqrt(k), 1.0 / np.sqrt(k), size=(rank, k))
            self.classical_factors.append((down, np.zeros((d, rank))))

        self.optimizer = make_optimizer(config.optimizer, config.learning_rate)
        self.trainable = trainable_count(HybridParams(self.circuit, self.mapping))
        self.aux_trainable = sum(down.size + up.size for down, up in self.classical_factors)

    def _quantum_factors(self) -> list[tuple[np.ndarray, np.ndarray]]:
        values = generate_params(self.circuit, self.mapping, self.plan)
        dims = self.netspec.layer_dims
        factors = []
        offset = 0
        for layer, count in zip(self.quantum_layers, self.quantum_counts):
            d, k = dims[layer + 1], dims[layer]
            factors.append(
                assemble_lora(values[offset : offset + count], d, k, self.layer_ranks[layer])
            )
            offset += count
        return factors

    def _effective_weights(self, quantum_factors) -> list[np.ndarray]:
        weights = [w.copy() for w in self.base_weights]
        for layer, (down, up) in zip(self.quantum_layers, quantum_factors):
            weights[layer] = weights[layer] + self.scaling * (up @ down)
        for layer, (down, up) in zip(self.classical_layers, self.classical_factors):
            weights[layer] = weights[layer] + self.scaling * (up @ down)
        return weights

    def net(self) -> TargetNet:
        return TargetNet(self.netspec, self._effective_weights(self._quantum_factors()),
                         [b.copy() for b in self.base_biases])

    def step(self, X, Y) -> float:
        quantum_factors = self._quantum_factors()
        net = TargetNet(self.netspec, self._effective_weights(quantum_factors), self.base_biases)
        preds = forward_batch(net, X)
        value = loss(preds, Y, self.loss_kind)
        _ensure_finite(value, float(np.linalg.norm(self.circuit.params)))
        cot = loss_grad(preds, Y, self.loss_kind)
        grad_flat = forecaster.backward_batch(net, X, cot)

        slices = param_slices(self.netspec)
        dims = self.netspec.layer_dims

        def weight_grad(layer: int) -> np.ndarray:
            wsl, _ = slices[layer]
            return grad_flat[wsl].reshape(dims[layer + 1], dims[layer])

        grad_quantum = np.concatenate([
            lora_grad(
                LoraTarget(self.base_weights[layer], self.layer_ranks[layer],
                           down, up, self.scaling),
                weight_grad(layer),
            )
            for layer, (down, up) in zip(self.quantum_layers, quantum_factors)
        ])
        grad_angles, grad_mapping = backprop_to_hybrid(
            self.circuit, self.mapping, self.plan, grad_quantum, method=self.grad_method
        )

        classical_grads = []
        for layer, (down, up) in zip(self.classical_layers, self.classical_factors):
            gw = weight_grad(layer)
            classical_grads.append((self.scaling * (up.T @ gw), self.scaling * (gw @ down.T)))

        flat = np.concatenate(
            [self.circuit.params.ravel(), self.mapping.params]
            + [f.ravel() for pair in self.classical_factors for f in pair]
        )
        grads = np.concatenate(
            [grad_angles.ravel(), grad_mapping]
            + [g.ravel() for pair in classical_grads for g in pair]
        )
        updated = self.optimizer.step(flat, grads)

        pos = self.circuit.num_params
        self.circuit = CircuitSpec(
            self.circuit.num_qubits, self.circuit.num_layers,
            updated[:pos].reshape(self.circuit.params.shape),
        )
        self.mapping = self.mapping.with_params(updated[pos : pos + self.mapping.num_params])
        pos += self.mapping.num_params
        new_factors = []
        for down, up in self.classical_factors:
            new_down = updated[pos : pos + down.size].reshape(down.shape)
            pos += down.size
            new_up = updated[pos : pos + up.size].reshape(up.shape)
            pos += up.size
            new_factors.append((new_down, new_up))
        self.classical_factors = new_factors
        return value

    def checkpoint_extras(self) -> dict:
        return {
            "circuit_angles": self.circuit.params.tolist(),
            "mapping_dims": list(self.mapping.layer_dims),
            "mapping_params": self.mapping.params.tolist(),
            "mapping_gain": self.mapping.output_gain,
            "base_params": self.base_params.tolist(),
            "quantum_layers": self.quantum_layers,
            "classical_factors": [
                {"down": down.tolist(), "up": up.tolist()}
                for down, up in self.classical_factors
            ],
        }


def _build_state(config: TrainConfig, netspec: NetSpec, init_seed: int):
    if config.mode == "qt":
        return _QtState(netspec, config, init_seed)
    if config.mode == "qpa":
        return _QpaState(netspec, config, init_seed)
    # full, and the dense phase of prune/share
    params = forecaster.init_params(netspec, init_seed)
    return _DenseState(netspec, params, make_optimizer(config.optimizer, config.learning_rate),
                       config.loss)


def _compress(config: TrainConfig, dense: _DenseState, seed: int):
    """Transition from the dense phase to the constrained retraining phase."""
    optimizer = make_optimizer(config.optimizer, config.learning_rate)
    if config.mode == "prune":
        mask = prune_magnitude(dense.params, config.sparsity)
        return _MaskedState(dense.netspec, dense.params, optimizer, config.loss, mask)
    codebook = weight_share(dense.params, config.clusters, seed)
    return _SharedState(dense.netspec, codebook, optimizer, config.loss)


# ---------------------------------------------------------------------------
# Data plumbing and evaluation
# ---------------------------------------------------------------------------

def stack_samples(samples: list[ForecastSample]) -> tuple[np.ndarray, np.ndarray]:
    if not samples:
        return np.zeros((0, 0)), np.zeros((0, 0))
    X = np.stack([s.features for s in samples])
    Y = np.stack([s.label for s in samples])
    return X, Y


def windows_of(tracks: list[Track], window: int, horizon: int) -> list[ForecastSample]:
    out: list[ForecastSample] = []
    for track in tracks:
        out.extend(make_windows(track, window, horizon))
    return out


def trajectory_errors(
    preds: np.ndarray,
    samples: list[ForecastSample],
    window: int,
    horizon: int,
    radius_km: float = EARTH_RADIUS_KM,
) -> np.ndarray:
    """Great-circle error (km) per sample per horizon step.

    Absolute positions are reconstructed by adding the predicted (and true)
    deltas to the last observed position stored in the features.
    """
    preds = np.asarray(preds, dtype=np.float64)
    X, Y = stack_samples(samples)
    if preds.shape != Y.shape:
        raise ValueError(f"prediction shape {preds.shape} != label shape {Y.shape}")
    base = (window - 1) * FEATURES_PER_STEP
    anchor_lat = X[:, base] * LAT_SCALE
    anchor_lon = X[:, base + 1] * LON_SCALE
    errors = np.empty((preds.shape[0], horizon))
    for h in range(horizon):
        errors[:, h] = great_circle_arrays(
            anchor_lat + preds[:, 2 * h], anchor_lon + preds[:, 2 * h + 1],
            anchor_lat + Y[:, 2 * h], anchor_lon + Y[:, 2 * h + 1],
            radius_km,
        )
    return errors


def evaluate_net(
    net: TargetNet,
    samples: list[ForecastSample],
    window: int,
    horizon: int,
    loss_kind: str = "mae",
    radius_km: float = EARTH_RADIUS_KM,
) -> dict:
    """Mean/median/per-horizon great-circle error plus the label-space loss."""
    if not samples:
        return {"test_mae": None, "gc_mean_km": None, "gc_median_km": None,
                "gc_per_horizon_km": [], "test_samples": 0}
    X, Y = stack_samples(samples)
    preds = forward_batch(net, X)
    errors = trajectory_errors(preds, samples, window, horizon, radius_km)
    return {
        "test_mae": loss(preds, Y, loss_kind),
        "gc_mean_km": float(errors.mean()),
        "gc_median_km": float(np.median(errors)),
        "gc_per_horizon_km": [float(v) for v in errors.mean(axis=0)],
        "test_samples": len(samples),
    }


# ---------------------------------------------------------------------------
# The training entry point
# ---------------------------------------------------------------------------

def train(config: TrainConfig, tracks: list[Track]) -> tuple[RunReport, dict]:
    """Run one full training according to ``config`` and report the results.

    Deterministic for a fixed config and seed on one machine.  Returns the
    report plus a JSON-serialisable checkpoint.
    """
    config.validate()
    started = time.perf_counter()

    train_tracks, test_tracks = split_by_year(tracks, tuple(config.train_years),
                                              tuple(config.test_years))
    if not train_tracks:
        raise ValueError("training split is empty; check the year ranges")
    ordered = sorted(train_tracks, key=lambda t: t.points[0].timestamp)
    n_val = int(config.val_fraction * len(ordered))
    fit_tracks = ordered[: len(ordered) - n_val]
    val_tracks = ordered[len(ordered) - n_val :] if n_val else []
    if not fit_tracks:
        raise ValueError("validation carve-out left no training storms")

    netspec = config.netspec
    X, Y = stack_samples(windows_of(fit_tracks, config.window, config.horizon))
    if X.shape[0] == 0:
        raise ValueError("no training windows; tracks shorter than window+horizon")
    val_X, val_Y = stack_samples(windows_of(val_tracks, config.window, config.horizon))
    test_samples = windows_of(test_tracks, config.window, config.horizon)

    rng = np.random.default_rng(config.seed)
    init_seed = int(rng.integers(2**31))
    compress_seed = int(rng.integers(2**31))
    state = _build_state(config, netspec, init_seed)

    phases = 2 if config.mode in ("prune", "share") else 1
    epoch_rows: list[tuple[int, float, float | None]] = []
    epoch_no = 0
    for phase in range(phases):
        if phase == 1:
            state = _compress(config, state, compress_seed)
        for _ in range(config.epochs):
            epoch_no += 1
            perm = rng.permutation(X.shape[0])
            batch_losses = []
            for batch_no, start in enumerate(range(0, X.shape[0], config.batch_size)):
                idx = perm[start : start + config.batch_size]
                try:
                    batch_losses.append(state.step(X[idx], Y[idx]))
                except NonFiniteLossError as exc:
                    raise NonFiniteLossError(
                        f"epoch {epoch_no}, batch {batch_no}: {exc}",
                        loss_value=exc.loss_value, param_norm=exc.param_norm,
                        epoch=epoch_no, batch=batch_no,
                    ) from exc
            train_loss = float(np.mean(batch_losses))
            val_loss = None
            if val_X.shape[0]:
                val_loss = loss(forward_batch(state.net(), val_X), val_Y, config.loss)
            epoch_rows.append((epoch_no, train_loss, val_loss))

    final_net = state.net()
    metrics = evaluate_net(final_net, test_samples, config.window, config.horizon,
                           loss_kind="mae", radius_km=config.earth_radius_km)

    report = RunReport(
        mode=config.mode,
        seed=config.seed,
        trainable_count=state.trainable,
        aux_trainable_count=state.aux_trainable,
        qubits=getattr(state, "plan", None) and state.plan.num_qubits,
        circuit_layers=getattr(state, "circuit", None) and state.circuit.num_layers,
        chunk_size=getattr(state, "plan", None) and state.plan.chunk_size,
        epochs=epoch_rows,
        final_train_loss=epoch_rows[-1][1],
        final_val_loss=epoch_rows[-1][2],
        test_mae=metrics["test_mae"],
        gc_mean_km=metrics["gc_mean_km"],
        gc_median_km=metrics["gc_median_km"],
        gc_per_horizon_km=metrics["gc_per_horizon_km"],
        test_samples=metrics["test_samples"],
        wall_clock_s=time.perf_counter() - started,
        config=config.to_dict(),
    )
    checkpoint = {
        "format": CHECKPOINT_FORMAT,
        "mode": config.mode,
        "config": config.to_dict(),
        "netspec": {
            "input_width": netspec.input_width,
            "hidden_dims": list(netspec.hidden_dims),
            "output_width": netspec.output_width,
        },
        "effective_params": net_params(final_net).tolist(),
        "trainable_count": state.trainable,
        "aux_trainable_count": state.aux_trainable,
        "extras": state.checkpoint_extras(),
    }
    return report, checkpoint


def evaluate(checkpoint: dict, tracks: list[Track]) -> dict:
    """Re-evaluate a checkpointed model on a fresh set of tracks."""
    if checkpoint.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unrecognised checkpoint format {checkpoint.get('format')!r}")
    spec = NetSpec(
        checkpoint["netspec"]["input_width"],
        tuple(checkpoint["netspec"]["hidden_dims"]),
        checkpoint["netspec"]["output_width"],
    )
    net = build_net(spec, np.array(checkpoint["effective_params"]))
    cfg = checkpoint["config"]
    samples = windows_of(tracks, cfg["window"], cfg["horizon"])
    metrics = evaluate_net(net, samples, cfg["window"], cfg["horizon"],
                           loss_kind="mae", radius_km=cfg["earth_radius_km"])
    metrics["mode"] = checkpoint["mode"]
    metrics["trainable_count"] = checkpoint["trainable_count"]
    return metrics


# ---------------------------------------------------------------------------
# Gradient audit (runs as a test and behind the gradcheck subcommand)
# ---------------------------------------------------------------------------

def gradient_audit(seed: int = 0, tolerance: float = 1e-4) -> dict:
    """Check the applied hybrid gradient against end-to-end finite differences.

    A frozen tiny configuration: 2 qubits, 2 layers, 10 generated parameters
    in chunks of 4, a quadratic loss on a 2-sample batch.  Returns the
    maximum relative error over circuit angles and mapping weights.
    """
    rng = np.random.default_rng(seed)
    netspec = NetSpec(1, (2,), 2)  # 1*2+2 + 2*2+2 = 10 parameters
    plan = plan_chunks(netspec.total_params, 4)  # 3 chunks on 2 qubits
    circuit = CircuitSpec(plan.num_qubits, 2,
                          rng.uniform(0.2, np.pi - 0.2, size=(2, plan.num_qubits)))
    model = init_mapping(plan.num_qubits, 4, seed=int(rng.integers(2**31)))
    X = rng.normal(size=(2, 1))
    Y = rng.normal(size=(2, 2))

    def pipeline_loss(angles_flat: np.ndarray, mapping_flat: np.ndarray) -> float:
        spec = CircuitSpec(circuit.num_qubits, circuit.num_layers,
                           angles_flat.reshape(circuit.params.shape))
        m = model.with_params(mapping_flat)
        net = build_net(netspec, generate_params(spec, m, plan))
        return loss(forward_batch(net, X), Y, "mse")

    values = generate_params(circuit, model, plan)
    net = build_net(netspec, values)
    cot = loss_grad(forward_batch(net, X), Y, "mse")
    grad_values = forecaster.backward_batch(net, X, cot)
    grad_angles, grad_mapping = backprop_to_hybrid(circuit, model, plan, grad_values)

    def fd(fn, x0: np.ndarray, step: float = 1e-5) -> np.ndarray:
        out = np.empty_like(x0)
        for i in range(x0.size):
            hi = x0.copy(); hi[i] += step
            lo = x0.copy(); lo[i] -= step
            out[i] = (fn(hi) - fn(lo)) / (2.0 * step)
        return out

    angles0 = circuit.params.ravel().copy()
    fd_angles = fd(lambda a: pipeline_loss(a, model.params), angles0)
    fd_mapping = fd(lambda b: pipeline_loss(angles0, b), model.params.copy())

    def max_rel(analytic: np.ndarray, numeric: np.ndarray) -> float:
        return float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-6)))

    rel_angles = max_rel(grad_angles.ravel(), fd_angles)
    rel_mapping = max_rel(grad_mapping, fd_mapping)
    return {
        "max_rel_angles": rel_angles,
        "max_rel_mapping": rel_mapping,
        "tolerance": tolerance,
        "passed": rel_angles <= tolerance and rel_mapping <= tolerance,
    }


# ---------------------------------------------------------------------------
# Sweeps and report files
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_epochs_csv(report: RunReport, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for epoch, train_loss, val_loss in report.epochs:
            fh.write(f"{epoch},{_fmt(train_loss)},{_fmt(val_loss)}\n")


def write_summary_csv(rows: list[dict], path, columns: list[str] | None = None) -> None:
    columns = columns or SUMMARY_COLUMNS
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(c)) for c in columns) + "\n")


def content_hash(config: dict, data_spec: str, data_bytes: bytes | None = None) -> str:
    digest = hashlib.sha256()
    digest.update(json.dumps(config, sort_keys=True).encode())
    digest.update(data_spec.encode())
    if data_bytes is not None:
        digest.update(data_bytes)
    return digest.hexdigest()


def write_manifest(report: RunReport, path, input_hash: str) -> None:
    manifest = {
        "config": report.config,
        "seed": report.seed,
        "input_hash": input_hash,
        "wall_clock_s": report.wall_clock_s,
        "trainable_count": report.trainable_count,
        "aux_trainable_count": report.aux_trainable_count,
        "gc_per_horizon_km": report.gc_per_horizon_km,
        "test_samples": report.test_samples,
    }
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_checkpoint(checkpoint: dict, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(checkpoint, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> dict:
    with open(path, "r", encoding="ascii") as fh:
        return json.load(fh)


def run_sweep(grid: dict, tracks: list[Track], out_dir: Path | None = None,
              input_hash: str = "") -> list[dict]:
    """Train one run per grid point; per-run failures are recorded, not fatal.

    ``grid`` holds a ``base`` config dict and an ``axes`` mapping of config
    field -> list of values; the sweep walks the Cartesian product in the
    order the axes appear.
    """
    base = grid.get("base", {})
    axes = grid.get("axes", {})
    names = list(axes.keys())
    rows: list[dict] = []
    combos = itertools.product(*(axes[n] for n in names)) if names else [()]
    for index, combo in enumerate(combos):
        overrides = dict(zip(names, combo))
        run_id = f"run{index:03d}" + "".join(f"-{n}{v}" for n, v in overrides.items())
        run_id = run_id.replace(" ", "").replace(",", "_").replace("[", "").replace("]", "")
        row = {"run_id": run_id, "status": "ok", "error": None}
        try:
            config = TrainConfig.from_dict({**base, **overrides})
            report, checkpoint = train(config, tracks)
            row.update({
                "mode": report.mode, "seed": report.seed,
                "chunk_size": report.chunk_size, "circuit_layers": report.circuit_layers,
                "qubits": report.qubits, "trainable_count": report.trainable_count,
                "test_mae": report.test_mae, "gc_mean_km": report.gc_mean_km,
            })
            if out_dir is not None:
                run_dir = Path(out_dir) / run_id
                run_dir.mkdir(parents=True, exist_ok=True)
                write_epochs_csv(report, run_dir / "epochs.csv")
                write_summary_csv([report.summary_row()], run_dir / "summary.csv")
                write_manifest(report, run_dir / "manifest.json", input_hash)
                save_checkpoint(checkpoint, run_dir / "checkpoint.json")
        except Exception as exc:  # noqa: BLE001 - sweep must keep going
            log.warning("sweep run %s failed: %s", run_id, exc)
            row["status"] = "error"
            row["error"] = " ".join(str(exc).split())
        rows.append(row)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_summary_csv(rows, Path(out_dir) / "sweep.csv", SWEEP_COLUMNS)
    return rows


def merge_summaries(paths: list, out_path) -> int:
    """Concatenate summary CSVs that share a header; returns the row count."""
    header: str | None = None
    rows: list[str] = []
    for path in paths:
        with open(path, "r", encoding="ascii") as fh:
            first = fh.readline().rstrip("\n")
            if header is None:
                header = first
            elif first != header:
                raise ValueError(f"{path}: header {first!r} does not match {header!r}")
            rows.extend(line.rstrip("\n") for line in fh if line.strip())
    if header is None:
        raise ValueError("no input files")
    with open(out_path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")
    return len(rows)
