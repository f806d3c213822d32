"""Randomized sketch-and-project solvers and the gossip protocols built on them."""

from .errors import (ConfigError, InconsistentSystemError, InvalidInputError,
                     InvalidParameterError, SketchGossipError)
from .graphs import Network, ac_system, algebraic_connectivity, parse_graph_spec
from .harness import ExperimentConfig, emit_plot_script, run_experiment
from .linalg import SpdMatrix, Spectrum, pseudoinverse
from .sketches import Coordinate, FixedSets, GaussianVector, UniformBlock
from .solver import SolverConfig, Stopping, predicted_rate, run, run_batch
from .system import LinearSystem
from .trace import Trace, fit_decay

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "Coordinate", "ExperimentConfig", "FixedSets", "GaussianVector",
    "InconsistentSystemError", "InvalidInputError", "InvalidParameterError", "LinearSystem",
    "Network", "SketchGossipError", "SolverConfig", "SpdMatrix", "Spectrum", "Stopping",
    "Trace", "UniformBlock", "ac_system", "algebraic_connectivity", "emit_plot_script",
    "fit_decay", "parse_graph_spec", "predicted_rate", "pseudoinverse", "run", "run_batch",
    "run_experiment",
]
