"""Numerical toolkit for the symmetrically perturbed spatial Kepler problem."""

from .errors import KeplerKitError
from .model import (
    EnergySurfaceClass,
    PhaseState,
    Perturbation,
    Stability,
    SystemParams,
    classify_kepler_surface,
    classify_pyramidal_surface,
    hamiltonian,
    make_ellipsoid_perturbation,
    make_pyramidal_perturbation,
    make_zero_perturbation,
)

__version__ = "0.1.0"
