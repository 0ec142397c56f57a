"""Chunk planning and the full parameter-generation pipeline.

A target vector of ``target_count`` parameters is partitioned into
``num_chunks = ceil(target_count / chunk_size)`` chunks.  Chunk i is produced
by feeding basis state i's bit string and measurement probability through the
shared mapping network; the last chunk is truncated to ``tail_len``.  The
qubit count is ``max(1, ceil(log2 num_chunks))`` (a zero-qubit circuit would
have no trainable angles, so one qubit is the floor).  Setting
``chunk_size = 1`` recovers one qubit per log2 of the raw parameter count.

Probabilities are consumed raw: basis states at index >= num_chunks are
simply never read, with no renormalisation over the retained ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import CircuitSpec, apply_ansatz, grad_probabilities, probabilities
from .mapping import MappingModel, backward_batch, forward_batch


@dataclass(frozen=True)
class ChunkPlan:
    """Bookkeeping tying a target parameter count to a qubit count."""

    target_count: int  # parameters to generate
    chunk_size: int    # parameters per mapping-network output
    num_chunks: int
    num_qubits: int
    tail_len: int      # valid outputs of the final chunk


@dataclass(frozen=True)
class HybridParams:
    """The trainable pair: circuit angles plus mapping-network weights."""

    circuit: CircuitSpec
    mapping: MappingModel

    @property
    def param_count(self) -> int:
        return self.circuit.num_params + self.mapping.num_params


def _ceil_log2(n: int) -> int:
    return (n - 1).bit_length() if n > 1 else 0


def plan_chunks(target_count: int, chunk_size: int) -> ChunkPlan:
    """Derive chunk count, qubit count and tail length for a target size."""
    if target_count < 1:
        raise ValueError(f"target_count must be >= 1, got {target_count}")
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    num_chunks = -(-target_count // chunk_size)
    num_qubits = max(1, _ceil_log2(num_chunks))
    tail_len = target_count - (num_chunks - 1) * chunk_size
    return ChunkPlan(target_count, chunk_size, num_chunks, num_qubits, tail_len)


def basis_encoding(index: int, num_qubits: int) -> tuple[int, ...]:
    """Most-significant-bit-first binary expansion of a basis index."""
    if not 0 <= index < (1 << num_qubits):
        raise ValueError(f"index {index} out of range for {num_qubits} qubits")
    return tuple((index >>
                  (num_qubits - 1 - pos)) & 1 for pos in range(num_qubits))


def _basis_matrix(num_rows: int, num_qubits: int) -> np.ndarray:
    shifts = np.arange(num_qubits - 1, -1, -1)
    return ((np.arange(num_rows)[:, None] >> shifts[None, :]) & 1).astype(np.float64)


def _check_compatible(spec: CircuitSpec, model: MappingModel, plan: ChunkPlan) -> None:
    if spec.num_qubits != plan.num_qubits:
        raise ValueError(f"circuit has {spec.num_qubits} qubits but plan needs {plan.num_qubits}")
    if model.input_width != plan.num_qubits + 1:
        raise ValueError(
            f"mapping input width {model.input_width} != num_qubits+1 = {plan.num_qubits + 1}"
        )
    if model.output_width != plan.chunk_size:
        raise ValueError(f"mapping output width {model.output_width} != chunk size {plan.chunk_size}")


def params_from_probabilities(model: MappingModel, plan: ChunkPlan, probs: np.ndarray) -> np.ndarray:
    """Assemble the target vector from precomputed measurement probabilities.

    Only the first ``plan.num_chunks`` entries of ``probs`` are read.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.size < plan.num_chunks:
        raise ValueError(f"need at least {plan.num_chunks} probabilities, got {probs.size}")
    bits = _basis_matrix(plan.num_chunks, plan.num_qubits)
    chunks = forward_batch(model, bits, probs[: plan.num_chunks])
    return chunks.ravel()[: plan.target_count].copy()


def generate_params(spec: CircuitSpec, model: MappingModel, plan: ChunkPlan) -> np.ndarray:
    """Run the circuit, map every used basis state, and concatenate the chunks."""
    _check_compatible(spec, model, plan)
    probs = probabilities(apply_ansatz(spec))
    return params_from_probabilities(model, plan, probs)


def backprop_to_hybrid(
    spec: CircuitSpec,
    model: MappingModel,
    plan: ChunkPlan,
    grad_target: np.ndarray,
    method: str = "exact-adjoint",
) -> tuple[np.ndarray, np.ndarray]:
    """Splice dL/d(target params) back onto the circuit angles and mapping weights.

    Returns ``(grad_angles, grad_mapping)`` with shapes matching
    ``spec.params`` and ``model.params``.  Mapping gradients accumulate over
    chunks in ascending chunk order; the angle gradient contracts the loss
    cotangent on the first ``num_chunks`` probabilities with the probability
    Jacobian.
    """
    _check_compatible(spec, model, plan)
    grad_target = np.asarray(grad_target, dtype=np.float64)
    if grad_target.shape != (plan.target_count,):
        raise ValueError(f"grad_target must have shape {(plan.target_count,)}, got {grad_target.shape}")

    # Truncation's adjoint: the discarded tail outputs get zero cotangent.
    upstream = np.zeros((plan.num_chunks, plan.chunk_size))
    upstream.ravel()[: plan.target_count] = grad_target

    probs = probabilities(apply_ansatz(spec))
    bits = _basis_matrix(plan.num_chunks, plan.num_qubits)
    grad_mapping, grad_probs = backward_batch(model, bits, probs[: plan.num_chunks], upstream)

    jac = grad_probabilities(spec, method=method)
    grad_flat = jac[: plan.num_chunks].T @ grad_probs
    return grad_flat.reshape(spec.num_layers, spec.num_qubits), grad_mapping
