"""Trust-weighted peer distillation over a communication graph."""

from .config import RunConfig, load_config
from .protocol import RunResult, Simulation, run_dml, run_experiment

__all__ = ["RunConfig", "load_config", "RunResult", "Simulation", "run_experiment", "run_dml"]
__version__ = "0.1.0"
