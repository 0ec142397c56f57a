"""Classical compression baselines: magnitude pruning and weight sharing.

Pruning is one-shot: the smallest-magnitude entries are zeroed (ties broken
by pruning the lower index first) and the survivors are retrained with the
mask enforced after every step.  Weight sharing clusters the parameter
values with seeded 1-D k-means and thereafter trains only the centroids,
each receiving the mean of its members' gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import CircuitSpec
from .forecaster import NetSpec
from .mapping import MappingModel
from .paramgen import HybridParams

KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-8


@dataclass
class PruneMask:
    mask: np.ndarray      # 0/1 per parameter, 0 = pruned
    sparsity: float

    @property
    def surviving(self) -> int:
        return int(self.mask.sum())


@dataclass
class ShareCodebook:
    centroids: np.ndarray     # (num_clusters,)
    assignments: np.ndarray   # (num_params,) indices into centroids


def prune_magnitude(values: np.ndarray, sparsity: float) -> PruneMask:
    """Mask the floor(sparsity * m) smallest-|value| entries."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if not 0.0 <= sparsity < 1.0:
        raise ValueError(f"sparsity must lie in [0, 1), got {sparsity}")
    num_pruned = int(sparsity * values.size)
    # Stable sort on |value| prunes the lower index first on ties.
    order = np.argsort(np.abs(values), kind="stable")
    mask = np.ones(values.size, dtype=np.int8)
    mask[order[:num_pruned]] = 0
    return PruneMask(mask, float(sparsity))


def _kmeans_pp_init(values: np.ndarray, num_clusters: int, rng: np.random.Generator) -> np.ndarray:
    centroids = np.empty(num_clusters)
    centroids[0] = values[rng.integers(values.size)]
    dist2 = (values - centroids[0]) ** 2
    for i in range(1, num_clusters):
        total = dist2.sum()
        if total > 0.0:
            draw = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(dist2), draw, side="right"))
        else:
            # every point already coincides with a centroid
            idx = int(rng.integers(values.size))
        centroids[i] = values[idx]
        dist2 = np.minimum(dist2, (values - centroids[i]) ** 2)
    return centroids


def _assign(values: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin returns the first minimum, so ties go to the lower centroid index
    return np.argmin(np.abs(values[:, None] - centroids[None, :]), axis=1)


def weight_share(values: np.ndarray, num_clusters: int, seed: int) -> ShareCodebook:
    """Seeded 1-D k-means (k-means++ init, Lloyd iterations) over the values."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if not 1 <= num_clusters <= values.size:
        raise ValueError(f"cluster count must lie in [1, {values.size}], got {num_clusters}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(values, num_clusters, rng)
    for _ in range(KMEANS_MAX_ITER):
        assign = _assign(values, centroids)
        new = centroids.copy()  # empty clusters keep their previous centroid
        counts = np.bincount(assign, minlength=num_clusters)
        sums = np.bincount(assign, weights=values, minlength=num_clusters)
        nonempty = counts > 0
        new[nonempty] = sums[nonempty] / counts[nonempty]
        shift = np.max(np.abs(new - centroids))
        centroids = new
        if shift <= KMEANS_TOL:
            break
    return ShareCodebook(centroids, _assign(values, centroids))


def codebook_values(codebook: ShareCodebook) -> np.ndarray:
    """Reconstruct the full parameter vector from the codebook."""
    return codebook.centroids[codebook.assignments]


def cluster_mean_grads(codebook: ShareCodebook, grad_values: np.ndarray) -> np.ndarray:
    """Tied-weight rule: each centroid's gradient is the mean over its members."""
    grad_values = np.asarray(grad_values, dtype=np.float64)
    num_clusters = codebook.centroids.size
    counts = np.bincount(codebook.assignments, minlength=num_clusters)
    sums = np.bincount(codebook.assignments, weights=grad_values, minlength=num_clusters)
    out = np.zeros(num_clusters)
    nonempty = counts > 0
    out[nonempty] = sums[nonempty] / counts[nonempty]
    return out


def trainable_count(state) -> int:
    """Trainable-parameter count of a compression state.

    Accepts a PruneMask (survivors), ShareCodebook (centroid count),
    HybridParams or (CircuitSpec, MappingModel) pair (angles plus mapping
    weights), NetSpec (full model), or a plain integer count.
    """
    if isinstance(state, PruneMask):
        return state.surviving
    if isinstance(state, ShareCodebook):
        return int(state.centroids.size)
    if isinstance(state, HybridParams):
        return state.param_count
    if isinstance(state, tuple) and len(state) == 2 \
            and isinstance(state[0], CircuitSpec) and isinstance(state[1], MappingModel):
        return state[0].num_params + state[1].num_params
    if isinstance(state, NetSpec):
        return state.total_params
    if isinstance(state, (int, np.integer)):
        return int(state)
    raise TypeError(f"no trainable-count rule for {type(state).__name__}")
