"""Low-rank adaptation tests: planning numbers, assembly, algebra, checkpoints."""

import numpy as np
import pytest

from qtrain.lora import (
    LoraTarget,
    assemble_lora,
    effective_weight,
    load_lora,
    lora_grad,
    lora_param_count,
    plan_lora,
    save_lora,
)
from qtrain.paramgen import plan_chunks

from oracles import central_diff


def test_worked_planning_example():
    plan = plan_lora(2048, 1024, 4, 64)
    assert plan.target_count == 12288
    assert plan.num_qubits == 8


def test_full_matrix_generation_needs_far_more_qubits():
    assert plan_chunks(2048 * 1024, 1).num_qubits == 21


def test_smallest_legal_configuration():
    plan = plan_lora(1, 1, 1, 1)
    assert plan.target_count == 2
    assert plan.num_qubits == 1


def test_plan_rejects_excess_rank_and_bad_dims():
    with pytest.raises(ValueError, match="rank"):
        plan_lora(4, 8, 5, 2)
    with pytest.raises(ValueError, match="positive"):
        plan_lora(0, 8, 1, 2)


def test_never_needs_more_qubits_than_full_matrix_generation():
    rng = np.random.default_rng(0)
    for _ in range(50):
        d = int(rng.integers(2, 200))
        k = int(rng.integers(2, 200))
        r = int(rng.integers(1, min(d, k) + 1))
        chunk = int(rng.integers(1, 64))
        if r * (d + k) > d * k:
            continue
        assert plan_lora(d, k, r, chunk).num_qubits <= plan_chunks(d * k, chunk).num_qubits


# -- assembly --------------------------------------------------------------------

def test_zero_vector_gives_zero_update():
    down, up = assemble_lora(np.zeros(lora_param_count(3, 2, 1)), 3, 2, 1)
    target = LoraTarget(np.ones((3, 2)), 1, down, up)
    np.testing.assert_array_equal(effective_weight(target), np.ones((3, 2)))


def test_hand_assembled_rank_one_case():
    down, up = assemble_lora(np.array([1.0, 2.0, 3.0, 4.0]), 2, 2, 1)
    np.testing.assert_array_equal(down, [[1.0, 2.0]])
    np.testing.assert_array_equal(up, [[3.0], [4.0]])
    np.testing.assert_array_equal(up @ down, [[3.0, 6.0], [4.0, 8.0]])


def test_assembly_round_trips():
    rng = np.random.default_rng(3)
    values = rng.normal(size=lora_param_count(5, 7, 2))
    down, up = assemble_lora(values, 5, 7, 2)
    np.testing.assert_array_equal(np.concatenate([down.ravel(), up.ravel()]), values)


def test_assembly_rejects_wrong_length():
    with pytest.raises(ValueError, match="expected"):
        assemble_lora(np.zeros(5), 2, 2, 1)


# -- effective weight ---------------------------------------------------------------

def test_effective_weight_equals_hand_multiplication():
    down, up = assemble_lora(np.array([1.0, 2.0, 3.0, 4.0]), 2, 2, 1)
    target = LoraTarget(np.zeros((2, 2)), 1, down, up)
    np.testing.assert_array_equal(effective_weight(target), [[3.0, 6.0], [4.0, 8.0]])


def test_full_rank_identity_padding_recovers_additive_update():
    rng = np.random.default_rng(5)
    base = rng.normal(size=(3, 3))
    update = rng.normal(size=(3, 3))
    target = LoraTarget(base, 3, down=update, up=np.eye(3))
    np.testing.assert_allclose(effective_weight(target), base + update, atol=1e-14)


def test_frozen_weight_is_not_modified():
    base = np.ones((2, 3))
    target = LoraTarget(base, 1, np.ones((1, 3)), np.ones((2, 1)), scaling=2.0)
    before = target.frozen_weight.copy()
    effective_weight(target)
    np.testing.assert_array_equal(target.frozen_weight, before)


def test_update_rank_is_bounded_by_the_factor_rank():
    rng = np.random.default_rng(7)
    for _ in range(10):
        d, k, r = 8, 6, 2
        down = rng.normal(size=(r, k))
        up = rng.normal(size=(d, r))
        singulars = np.linalg.svd(up @ down, compute_uv=False)
        assert np.all(singulars[r:] < 1e-10 * singulars[0])


def test_effective_weight_is_linear_in_each_factor():
    rng = np.random.default_rng(9)
    base = rng.normal(size=(4, 5))
    up = rng.normal(size=(4, 2))
    d1, d2 = rng.normal(size=(2, 5)), rng.normal(size=(2, 5))
    a, b = 0.3, -1.2
    combo = effective_weight(LoraTarget(base, 2, a * d1 + b * d2, up))
    parts = (a * effective_weight(LoraTarget(np.zeros((4, 5)), 2, d1, up))
             + b * effective_weight(LoraTarget(np.zeros((4, 5)), 2, d2, up)) + base)
    np.testing.assert_allclose(combo, parts, atol=1e-10)


def test_shape_validation():
    with pytest.raises(ValueError, match="rank"):
        LoraTarget(np.zeros((2, 2)), 3, np.zeros((3, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError, match="down factor"):
        LoraTarget(np.zeros((2, 2)), 1, np.zeros((1, 3)), np.zeros((2, 1)))
    with pytest.raises(ValueError, match="up factor"):
        LoraTarget(np.zeros((2, 2)), 1, np.zeros((1, 2)), np.zeros((3, 1)))


# -- gradients ------------------------------------------------------------------------

def test_factor_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    base = rng.normal(size=(3, 4))
    down = rng.normal(size=(2, 4))
    up = rng.normal(size=(3, 2))
    cot = rng.normal(size=(3, 4))
    target = LoraTarget(base, 2, down, up, scaling=1.3)
    analytic = lora_grad(target, cot)

    flat0 = np.concatenate([down.ravel(), up.ravel()])

    def scalar_loss(flat):
        d, u = assemble_lora(flat, 3, 4, 2)
        return float((cot * effective_weight(LoraTarget(base, 2, d, u, scaling=1.3))).sum())

    fd = central_diff(scalar_loss, flat0, step=1e-6)
    np.testing.assert_allclose(analytic, fd, rtol=1e-6, atol=1e-9)


# -- serialization ----------------------------------------------------------------------

def test_factor_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(13)
    base = rng.normal(size=(4, 3))
    target = LoraTarget(base, 2, rng.normal(size=(2, 3)), rng.normal(size=(4, 2)), scaling=0.5)
    path = tmp_path / "factors.txt"
    save_lora(target, path)
    loaded = load_lora(path, frozen_weight=base)
    assert loaded.rank == 2 and loaded.scaling == 0.5
    np.testing.assert_array_equal(loaded.down, target.down)
    np.testing.assert_array_equal(loaded.up, target.up)
    np.testing.assert_array_equal(loaded.frozen_weight, base)
    # without a base the frozen weight defaults to zero
    np.testing.assert_array_equal(load_lora(path).frozen_weight, np.zeros((4, 3)))


def test_load_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("something-else a b c d\n")
    with pytest.raises(ValueError, match="header"):
        load_lora(path)
