"""Adaptive charging-range selection for a static wireless charger serving mobile agents."""
from .engine import ScenarioConfig, run_experiment, run_simulation
from .offline import MNCSolver, MNLSolver
from .policies import MCER, MWA, FixedRange, LdMax, RandMinMax

__all__ = [
    "FixedRange",
    "LdMax",
    "MCER",
    "MNCSolver",
    "MNLSolver",
    "MWA",
    "RandMinMax",
    "ScenarioConfig",
    "run_experiment",
    "run_simulation",
]

__version__ = "0.1.0"
