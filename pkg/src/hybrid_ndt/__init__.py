"""Hybrid network digital twin identified online by deterministic annealing.

The twin maps a position to a serving cell (the mode) and a quality vector
(RSRP, SINR).  It is learned from a stream of UE measurements, adapts to
network drift by reheating the annealing schedule, and bridges cell faults
with a temporary correction term.
"""

from .config import ConfigError, RunConfig, load_config, parse_config, shipped_scenarios
from .core import (BaseStation, FeatureBounds, Observation, ObservationVector,
                   RejectedRecordError, Workspace, denormalize, normalize, quality_part,
                   spatial_part)
from .divergence import KullbackLeibler, WeightedSquaredEuclidean, bregman, class_constrained
from .netsim import Scenario, iter_scenario, run_scenario
from .oda import Annealer, TrainerConfig, TrainerState, anneal, fixed_point_oracle, sa_step
from .pipeline import BaselineTrainer, GridEvaluator, TwinTrainer
from .triggers import EventKind, TriggerConfig
from .twin import HybridNdtModel, predict_quality

__version__ = "0.1.0"

__all__ = [
    "Annealer", "BaseStation", "BaselineTrainer", "ConfigError", "EventKind", "FeatureBounds",
    "GridEvaluator", "HybridNdtModel", "KullbackLeibler", "Observation", "ObservationVector",
    "RejectedRecordError", "RunConfig", "Scenario", "TrainerConfig", "TrainerState",
    "TriggerConfig", "TwinTrainer", "WeightedSquaredEuclidean", "Workspace", "anneal",
    "bregman", "class_constrained", "denormalize", "fixed_point_oracle", "iter_scenario",
    "load_config", "normalize", "parse_config", "predict_quality", "quality_part",
    "run_scenario", "sa_step", "shipped_scenarios", "spatial_part",
]
