"""Hybrid quantum-classical parameter generation for compact forecasting models.

A simulated rotation/CNOT circuit feeds its measurement probabilities
through a small mapping network to generate the weights of a classical
forecaster (or the low-rank factors adapting one), and only the circuit
angles and mapping weights are trained.  The package also ships magnitude
pruning and weight-sharing baselines plus a benchmark harness on
synthetic storm tracks.
"""

from .baselines import PruneMask, ShareCodebook, prune_magnitude, trainable_count, weight_share
from .circuit import CircuitSpec, apply_ansatz, grad_probabilities, probabilities
from .data import (
    EARTH_RADIUS_KM,
    ForecastSample,
    GeoPoint,
    Track,
    TrackPoint,
    great_circle,
    load_tracks,
    make_windows,
    split_by_year,
    synth_tracks,
)
from .forecaster import NetSpec, TargetNet, backward, build_net, forward, loss, net_params
from .lora import LoraTarget, assemble_lora, effective_weight, plan_lora
from .mapping import MappingModel, init_mapping, map_backward, map_forward
from .paramgen import (
    ChunkPlan,
    HybridParams,
    backprop_to_hybrid,
    basis_encoding,
    generate_params,
    plan_chunks,
)
from .training import RunReport, TrainConfig, evaluate, gradient_audit, hybrid_step, run_sweep, train

__version__ = "0.1.0"

__all__ = [
    "CircuitSpec", "apply_ansatz", "probabilities", "grad_probabilities",
    "MappingModel", "init_mapping", "map_forward", "map_backward",
    "ChunkPlan", "HybridParams", "plan_chunks", "basis_encoding",
    "generate_params", "backprop_to_hybrid",
    "LoraTarget", "plan_lora", "assemble_lora", "effective_weight",
    "NetSpec", "TargetNet", "build_net", "net_params", "forward", "backward", "loss",
    "PruneMask", "ShareCodebook", "prune_magnitude", "weight_share", "trainable_count",
    "GeoPoint", "TrackPoint", "Track", "ForecastSample", "EARTH_RADIUS_KM",
    "great_circle", "load_tracks", "synth_tracks", "make_windows", "split_by_year",
    "TrainConfig", "RunReport", "hybrid_step", "train", "evaluate", "run_sweep",
    "gradient_audit",
]
