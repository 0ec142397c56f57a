"""Circuit simulator tests: known states, the dense-matrix oracle, gradients."""

import math

import numpy as np
import pytest

from qtrain.circuit import (
    MAX_QUBITS,
    CircuitSpec,
    apply_ansatz,
    grad_probabilities,
    probabilities,
)

from oracles import central_diff, dense_ansatz


def random_spec(rng, num_qubits, num_layers):
    return CircuitSpec(num_qubits, num_layers,
                       rng.uniform(-np.pi, np.pi, size=(num_layers, num_qubits)))


# -- known single-qubit states ------------------------------------------------

def test_identity_rotation_leaves_ground_state():
    state = apply_ansatz(CircuitSpec(1, 1, np.array([[0.0]])))
    np.testing.assert_allclose(state, [1.0, 0.0], atol=1e-15)


def test_pi_rotation_flips_to_one():
    state = apply_ansatz(CircuitSpec(1, 1, np.array([[math.pi]])))
    np.testing.assert_allclose(state, [0.0, 1.0], atol=1e-15)


def test_probabilities_of_basis_state():
    np.testing.assert_array_equal(probabilities(np.array([1.0, 0.0])), [1.0, 0.0])


def test_probabilities_of_equal_superposition():
    probs = probabilities(np.array([1.0, 1.0]) / math.sqrt(2))
    np.testing.assert_allclose(probs, [0.5, 0.5], atol=1e-15)


def test_probabilities_reject_unnormalised_state():
    with pytest.raises(ValueError, match="unit-norm"):
        probabilities(np.array([1.0, 1.0]))


# -- dense matrix-product oracle ----------------------------------------------

def test_matches_dense_oracle_on_random_circuits():
    rng = np.random.default_rng(7)
    for num_qubits in range(1, 5):
        for num_layers in range(1, 4):
            for _ in range(50):
                spec = random_spec(rng, num_qubits, num_layers)
                expected = dense_ansatz(num_qubits, num_layers, spec.params)
                np.testing.assert_allclose(apply_ansatz(spec), expected, atol=1e-12)


def test_two_qubit_probabilities_match_oracle():
    spec = CircuitSpec(2, 1, np.array([[math.pi / 2, math.pi / 2]]))
    expected = np.abs(dense_ansatz(2, 1, spec.params)) ** 2
    np.testing.assert_allclose(probabilities(apply_ansatz(spec)), expected, atol=1e-12)


def test_probabilities_sum_to_one():
    rng = np.random.default_rng(3)
    for _ in range(30):
        spec = random_spec(rng, int(rng.integers(1, 7)), int(rng.integers(1, 5)))
        assert abs(probabilities(apply_ansatz(spec)).sum() - 1.0) < 1e-10


def test_deterministic_for_fixed_spec():
    spec = random_spec(np.random.default_rng(11), 3, 2)
    np.testing.assert_array_equal(apply_ansatz(spec), apply_ansatz(spec))


# -- validation ----------------------------------------------------------------

@pytest.mark.parametrize("num_qubits,num_layers", [(0, 1), (-1, 1), (1, 0), (2, -3)])
def test_rejects_bad_counts(num_qubits, num_layers):
    with pytest.raises(ValueError):
        CircuitSpec(num_qubits, num_layers, np.zeros((max(num_layers, 1), max(num_qubits, 1))))


def test_rejects_nonfinite_angles():
    with pytest.raises(ValueError, match="finite"):
        CircuitSpec(1, 1, np.array([[np.nan]]))


def test_rejects_wrong_param_shape():
    with pytest.raises(ValueError, match="shape"):
        CircuitSpec(2, 2, np.zeros((2, 3)))


def test_rejects_too_many_qubits():
    with pytest.raises(ValueError, match="limit"):
        CircuitSpec(MAX_QUBITS + 1, 1, np.zeros((1, MAX_QUBITS + 1)))


def test_rejects_unknown_gradient_method():
    spec = CircuitSpec(1, 1, np.array([[0.1]]))
    with pytest.raises(ValueError, match="unknown gradient method"):
        grad_probabilities(spec, method="magic")


# -- gradients -----------------------------------------------------------------

def test_single_qubit_gradient_closed_form():
    # p_1(theta) = sin^2(theta/2), so dp_1/dtheta = sin(theta)/2 = 0.5 at pi/2
    spec = CircuitSpec(1, 1, np.array([[math.pi / 2]]))
    for method in ("exact-adjoint", "parameter-shift"):
        jac = grad_probabilities(spec, method)
        assert jac.shape == (2, 1)
        assert abs(jac[1, 0] - 0.5) < 1e-12
        assert abs(jac[0, 0] + 0.5) < 1e-12


def test_zero_angles_are_stationary_for_ground_probability():
    spec = CircuitSpec(3, 2, np.zeros((2, 3)))
    for method in ("exact-adjoint", "parameter-shift"):
        jac = grad_probabilities(spec, method)
        np.testing.assert_allclose(jac[0], 0.0, atol=1e-12)


def test_methods_agree_with_finite_differences():
    rng = np.random.default_rng(5)
    spec = random_spec(rng, 2, 2)

    def probs_of(flat):
        return probabilities(apply_ansatz(
            CircuitSpec(2, 2, flat.reshape(2, 2))))

    fd = central_diff(probs_of, spec.params.ravel(), step=1e-5)
    for method in ("exact-adjoint", "parameter-shift"):
        np.testing.assert_allclose(grad_probabilities(spec, method), fd, rtol=1e-6, atol=1e-9)


def test_methods_agree_over_many_random_specs():
    rng = np.random.default_rng(17)
    for _ in range(100):
        spec = random_spec(rng, int(rng.integers(1, 7)), int(rng.integers(1, 5)))
        adjoint = grad_probabilities(spec, "exact-adjoint")
        shift = grad_probabilities(spec, "parameter-shift")
        assert np.max(np.abs(adjoint - shift)) < 1e-8

        def probs_of(flat, spec=spec):
            return probabilities(apply_ansatz(
                CircuitSpec(spec.num_qubits, spec.num_layers,
                            flat.reshape(spec.params.shape))))

        fd = central_diff(probs_of, spec.params.ravel(), step=1e-5)
        np.testing.assert_allclose(adjoint, fd, rtol=1e-4, atol=1e-7)


def test_jacobian_rows_conserve_probability():
    rng = np.random.default_rng(23)
    for _ in range(20):
        spec = random_spec(rng, int(rng.integers(1, 6)), int(rng.integers(1, 4)))
        for method in ("exact-adjoint", "parameter-shift"):
            column_sums = grad_probabilities(spec, method).sum(axis=0)
            np.testing.assert_allclose(column_sums, 0.0, atol=1e-9)
