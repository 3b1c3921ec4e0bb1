"""Closed-loop AQM tuning testbed: DASH video over a RED-style bottleneck
whose target delay is adjusted online by a small Q-learning agent fed with
in-band telemetry."""

__version__ = "0.1.0"

from .config import ExperimentConfig, make_config
from .scenario import Simulation, run_experiment

__all__ = ["ExperimentConfig", "make_config", "Simulation", "run_experiment",
           "__version__"]
