"""Quantum graph attention networks for molecular property regression."""

from .circuits import CircuitSpec, PoolPlan, build_qgcn
from .graph import DatasetSplit, MolecularGraph, filter_and_sample, load_dataset, load_fixture, normalize
from .models import ModelConfig, ModelInstance, count_params, forward_molecule
from .qsim import Gate, Observable, StateVector
from .train import TrainConfig, TrainReport, train

__version__ = "0.1.0"

__all__ = [
    "CircuitSpec", "PoolPlan", "build_qgcn",
    "DatasetSplit", "MolecularGraph", "filter_and_sample", "load_dataset", "load_fixture", "normalize",
    "ModelConfig", "ModelInstance", "count_params", "forward_molecule",
    "Gate", "Observable", "StateVector",
    "TrainConfig", "TrainReport", "train",
]
