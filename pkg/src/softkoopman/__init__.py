"""Koopman-style lifted modeling and open-loop MPC for a simulated
two-chamber pneumatic catheter, with a constant-curvature analytic baseline
and the evaluation protocols to compare them."""

__version__ = "0.1.0"

from .core import ControlInput, Dataset, Normalizer, RobotState, Sample
from .plant import AtriumScenario, CatheterPlant, PlantConfig, collect_random_walk

__all__ = [
    "ControlInput",
    "Dataset",
    "Normalizer",
    "RobotState",
    "Sample",
    "AtriumScenario",
    "CatheterPlant",
    "PlantConfig",
    "collect_random_walk",
    "__version__",
]
