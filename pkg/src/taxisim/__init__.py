"""Two-scale bacterial nutrient-taxis simulator.

A weighted-particle Monte Carlo engine for the velocity-jump process with a
perturbed turning rate, a finite-volume solver for its macroscopic doubly
degenerate cross-diffusion limit, and experiment drivers that connect the two.
"""

from .config import SimConfig, parse_config, echo_config, config_hash
from .fields import FieldState, Grid, NumericalAbort
from .kinetic import ParticleEnsemble, init_ensemble, run_kinetic, step_kinetic
from .pde import PdeParams, run_pde, step_pde
from .turning import TurningModel
from .velocity import VelocitySphere, make_velocity_sphere, integrate

__version__ = "0.1.0"

__all__ = [
    "SimConfig", "parse_config", "echo_config", "config_hash",
    "FieldState", "Grid", "NumericalAbort",
    "ParticleEnsemble", "init_ensemble", "run_kinetic", "step_kinetic",
    "PdeParams", "run_pde", "step_pde",
    "TurningModel",
    "VelocitySphere", "make_velocity_sphere", "integrate",
    "__version__",
]
