"""Semiclassical many-body propagation of bosons in Fock space.

Subpackages cover the Bose-Hubbard model with disorder (`model`), exact
quantum evolution (`fock`), quadrature-state overlaps (`quadrature`),
mean-field dynamics with tangent flow (`meanfield`), boundary-value
trajectories with van Vleck prefactors (`trajectory`), the semiclassical
propagator and classical sum rule (`semiclassics`), and the disorder-averaged
coherent-backscattering experiment (`cbs`).
"""

__version__ = "1.0.0"

from .model import BoseHubbardModel, DisorderSpec, build_model, sample_disorder

__all__ = [
    "BoseHubbardModel",
    "DisorderSpec",
    "build_model",
    "sample_disorder",
    "__version__",
]
