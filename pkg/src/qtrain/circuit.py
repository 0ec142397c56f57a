"""Exact statevector simulation of the layered RY/CNOT ansatz.

The circuit acts on ``num_qubits`` qubits initialised to |0...0>.  One layer
applies an RY rotation to every qubit (each qubit has its own angle per
layer), followed by a linear CNOT chain with control i and target i+1,
without wraparound.  ``num_layers`` such layers are applied in sequence.

Conventions, fixed globally so basis encodings are reproducible:

* basis index i is read with qubit 1 as the most significant bit, so for
  three qubits |q1 q2 q3> = |110> has index 6;
* rotation angles are flattened layer-major: flat parameter k belongs to
  layer ``k // num_qubits``, qubit ``k % num_qubits``.

Only RY and CNOT appear, so amplitudes are real throughout; complex storage
is kept anyway since downstream consumers only see probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Dense statevectors: 2^24 complex doubles is 256 MB, the practical ceiling.
MAX_QUBITS = 24

GRAD_METHODS = ("exact-adjoint", "parameter-shift")


@dataclass(frozen=True)
class CircuitSpec:
    """Ansatz description: qubit count, depth, and per-layer-per-qubit angles."""

    num_qubits: int
    num_layers: int
    params: np.ndarray  # shape (num_layers, num_qubits), radians

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ValueError(f"num_qubits must be >= 1, got {self.num_qubits}")
        if self.num_layers < 1:
            raise ValueError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.num_qubits > MAX_QUBITS:
            raise ValueError(
                f"num_qubits={self.num_qubits} exceeds the {MAX_QUBITS}-qubit "
                f"dense-simulation limit"
            )
        params = np.asarray(self.params, dtype=np.float64)
        if params.shape != (self.num_layers, self.num_qubits):
            raise ValueError(
                f"params must have shape {(self.num_layers, self.num_qubits)}, "
                f"got {params.shape}"
            )
        if not np.all(np.isfinite(params)):
            raise ValueError("params must be finite")
        object.__setattr__(self, "params", params)

    @property
    def num_params(self) -> int:
        return self.num_layers * self.num_qubits


def _apply_ry(states: np.ndarray, qubit: int, angle: float, num_qubits: int) -> np.ndarray:
    """Apply RY(angle) on ``qubit`` to one state or a stack of states."""
    c = math.cos(0.5 * angle)
    s = math.sin(0.5 * angle)
    left = 1 << qubit
    right = 1 << (num_qubits - 1 - qubit)
    x = states.reshape(states.shape[:-1] + (left, 2, right))
    out = np.empty_like(x)
    a0 = x[..., 0, :]
    a1 = x[..., 1, :]
    out[..., 0, :] = c * a0 - s * a1
    out[..., 1, :] = s * a0 + c * a1
    return out.reshape(states.shape)


def _apply_cnot(states: np.ndarray, control: int, target: int, num_qubits: int) -> np.ndarray:
    """Apply CNOT(control -> target) for control < target."""
    a = 1 << control
    b = 1 << (target - control - 1)
    d = 1 << (num_qubits - 1 - target)
    x = states.reshape(states.shape[:-1] + (a, 2, b, 2, d))
    out = x.copy()
    out[..., 1, :, 0, :] = x[..., 1, :, 1, :]
    out[..., 1, :, 1, :] = x[..., 1, :, 0, :]
    return out.reshape(states.shape)


def apply_ansatz(spec: CircuitSpec) -> np.ndarray:
    """Run the circuit on |0...0> and return the exact statevector.

    Returns a complex array of length ``2**num_qubits`` with unit norm.
    """
    n = spec.num_qubits
    state = np.zeros(1 << n, dtype=np.complex128)
    state[0] = 1.0
    for layer in range(spec.num_layers):
        for q in range(n):
            state = _apply_ry(state, q, spec.params[layer, q], n)
        for q in range(n - 1):
            state = _apply_cnot(state, q, q + 1, n)
    return state


def probabilities(state: np.ndarray) -> np.ndarray:
    """Squared moduli of the amplitudes of a unit-norm statevector."""
    state = np.asarray(state, dtype=np.complex128)
    probs = state.real**2 + state.imag**2
    total = probs.sum()
    if abs(total - 1.0) > 1e-10:
        raise ValueError(f"statevector is not unit-norm: |amp|^2 sums to {total!r}")
    return probs


def _jacobian_adjoint(spec: CircuitSpec) -> np.ndarray:
    """Forward-sensitivity Jacobian of all probabilities w.r.t. all angles.

    One pass over the circuit; each RY seeds a tangent row (its derivative
    gate is RY(angle + pi)/2 applied to the pre-gate state) and every later
    gate propagates the whole stack at once.
    """
    n = spec.num_qubits
    dim = 1 << n
    rows = np.zeros((1 + spec.num_params, dim), dtype=np.complex128)
    rows[0, 0] = 1.0
    live = 1  # rows[0] is the state, rows[1:live] are tangents seeded so far
    for layer in range(spec.num_layers):
        for q in range(n):
            angle = spec.params[layer, q]
            rows[live] = 0.5 * _apply_ry(rows[0], q, angle + math.pi, n)
            rows[:live] = _apply_ry(rows[:live], q, angle, n)
            live += 1
        for q in range(n - 1):
            rows[:live] = _apply_cnot(rows[:live], q, q + 1, n)
    state = rows[0]
    tangents = rows[1:]
    # d|amp|^2 = 2 Re(conj(amp) * d amp)
    return 2.0 * (tangents * state.conj()).real.T


def _jacobian_parameter_shift(spec: CircuitSpec) -> np.ndarray:
    """Two-point shift rule, evaluating the circuit at angle +- pi/2."""
    jac = np.empty((1 << spec.num_qubits, spec.num_params))
    k = 0
    for layer in range(spec.num_layers):
        for q in range(spec.num_qubits):
            plus = _shifted_probs(spec, layer, q, +0.5 * math.pi)
            minus = _shifted_probs(spec, layer, q, -0.5 * math.pi)
            jac[:, k] = 0.5 * (plus - minus)
            k += 1
    return jac


def _shifted_probs(spec: CircuitSpec, layer: int, qubit: int, delta: float) -> np.ndarray:
    params = spec.params.copy()
    params[layer, qubit] += delta
    shifted = CircuitSpec(spec.num_qubits, spec.num_layers, params)
    return probabilities(apply_ansatz(shifted))


def grad_probabilities(spec: CircuitSpec, method: str = "exact-adjoint") -> np.ndarray:
    """Jacobian d p_i / d angle_k, shape ``(2**num_qubits, num_layers * num_qubits)``.

    ``method`` is ``"exact-adjoint"`` (differentiates the simulation, the
    cheap default) or ``"parameter-shift"`` (hardware-faithful two-point
    rule; each probability is the expectation of a basis projector, so the
    RY shift rule applies exactly).  Both are exact and agree to roundoff.
    """
    if method == "exact-adjoint":
        return _jacobian_adjoint(spec)
    if method == "parameter-shift":
        return _jacobian_parameter_shift(spec)
    raise ValueError(f"unknown gradient method {method!r}; expected one of {GRAD_METHODS}")
