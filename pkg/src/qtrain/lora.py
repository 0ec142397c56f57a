"""Low-rank adaptation targets fed by the parameter-generation pipeline.

A frozen weight matrix W0 of shape (out_dim, in_dim) is updated as
W0 + scaling * up @ down, with down of shape (rank, in_dim) and up of shape
(out_dim, rank).  The generated vector packs the flattened factors
down-then-up, both row-major, totalling rank * (out_dim + in_dim) values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .paramgen import ChunkPlan, plan_chunks

_FORMAT_TAG = "qtrain-lora-v1"


@dataclass
class LoraTarget:
    frozen_weight: np.ndarray  # (out_dim, in_dim), never modified
    rank: int
    down: np.ndarray           # (rank, in_dim)
    up: np.ndarray             # (out_dim, rank)
    scaling: float = 1.0

    def __post_init__(self):
        w0 = np.asarray(self.frozen_weight, dtype=np.float64)
        down = np.asarray(self.down, dtype=np.float64)
        up = np.asarray(self.up, dtype=np.float64)
        d, k = w0.shape
        if not 1 <= self.rank <= min(d, k):
            raise ValueError(f"rank {self.rank} out of range for a {d}x{k} matrix")
        if down.shape != (self.rank, k):
            raise ValueError(f"down factor must have shape {(self.rank, k)}, got {down.shape}")
        if up.shape != (d, self.rank):
            raise ValueError(f"up factor must have shape {(d, self.rank)}, got {up.shape}")
        object.__setattr__(self, "frozen_weight", w0)
        object.__setattr__(self, "down", down)
        object.__setattr__(self, "up", up)

    @property
    def out_dim(self) -> int:
        return self.frozen_weight.shape[0]

    @property
    def in_dim(self) -> int:
        return self.frozen_weight.shape[1]


def lora_param_count(out_dim: int, in_dim: int, rank: int) -> int:
    return rank * (out_dim + in_dim)


def plan_lora(out_dim: int, in_dim: int, rank: int, chunk_size: int) -> ChunkPlan:
    """Chunk plan for generating both factors of one low-rank update."""
    if out_dim < 1 or in_dim < 1:
        raise ValueError(f"matrix dims must be positive, got {out_dim}x{in_dim}")
    if not 1 <= rank <= min(out_dim, in_dim):
        raise ValueError(f"rank {rank} out of range for a {out_dim}x{in_dim} matrix")
    return plan_chunks(lora_param_count(out_dim, in_dim, rank), chunk_size)


def assemble_lora(values: np.ndarray, out_dim: int, in_dim: int, rank: int) -> tuple[np.ndarray, np.ndarray]:
    """Split a flat generated vector into (down, up); down fills first, row-major."""
    values = np.asarray(values, dtype=np.float64)
    expected = lora_param_count(out_dim, in_dim, rank)
    if values.shape != (expected,):
        raise ValueError(f"expected {expected} values, got shape {values.shape}")
    down = values[: rank * in_dim].reshape(rank, in_dim)
    up = values[rank * in_dim :].reshape(out_dim, rank)
    return down, up


def effective_weight(target: LoraTarget) -> np.ndarray:
    """W0 + scaling * up @ down; the frozen weight is left untouched."""
    return target.frozen_weight + target.scaling * (target.up @ target.down)


def lora_grad(target: LoraTarget, grad_weight: np.ndarray) -> np.ndarray:
    """Chain dL/d(effective weight) to the flat generated vector down||up."""
    grad_weight = np.asarray(grad_weight, dtype=np.float64)
    if grad_weight.shape != target.frozen_weight.shape:
        raise ValueError(
            f"grad_weight must have shape {target.frozen_weight.shape}, got {grad_weight.shape}"
        )
    grad_down = target.scaling * (target.up.T @ grad_weight)
    grad_up = target.scaling * (grad_weight @ target.down.T)
    return np.concatenate([grad_down.ravel(), grad_up.ravel()])


def save_lora(target: LoraTarget, path) -> None:
    """Factor checkpoint: dims, rank and scaling in the header, then down and up values."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(
            f"{_FORMAT_TAG} out={target.out_dim} in={target.in_dim} "
            f"rank={target.rank} scaling={float(target.scaling)!r}\n"
        )
        for v in target.down.ravel():
            fh.write(f"{float(v)!r}\n")
        for v in target.up.ravel():
            fh.write(f"{float(v)!r}\n")


def load_lora(path, frozen_weight: np.ndarray | None = None) -> LoraTarget:
    """Read a factor checkpoint; the frozen weight is supplied by the caller
    (zeros if omitted, since checkpoints store only the adaptation)."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 5 or header[0] != _FORMAT_TAG:
            raise ValueError(f"unrecognised factor checkpoint header: {' '.join(header)!r}")
        out_dim = int(header[1].removeprefix("out="))
        in_dim = int(header[2].removeprefix("in="))
        rank = int(header[3].removeprefix("rank="))
        scaling = float(header[4].removeprefix("scaling="))
        values = np.array([float(line) for line in fh], dtype=np.float64)
    down, up = assemble_lora(values, out_dim, in_dim, rank)
    if frozen_weight is None:
        frozen_weight = np.zeros((out_dim, in_dim))
    return LoraTarget(frozen_weight, rank, down, up, scaling)
