"""Ruelle resonances of analytic perturbations of hyperbolic toral automorphisms.

The main entry points are :func:`ruelle.koopman.assemble` (weighted Koopman
matrix over a Fourier truncation), :func:`ruelle.koopman.resonances`, the two
trace routes in :mod:`ruelle.koopman`, the perturbation generators in
:mod:`ruelle.perturb` and the SRB extraction in :mod:`ruelle.transfer`.
"""
from .analytic_maps import PerturbedMap, Profile, TrigPolynomial, fixed_points_perturbed
from .aniso_space import AnisotropicWeight, BasisIndex
from .errors import RuelleError
from .koopman import KoopmanMatrix, assemble, resonances, trace_matrix, trace_orbit
from .lattice import HyperbolicAutomorphism, fixed_points_linear, periodic_points_linear, validate_hyperbolic

__all__ = [
    "AnisotropicWeight", "BasisIndex", "HyperbolicAutomorphism", "KoopmanMatrix", "PerturbedMap",
    "Profile", "RuelleError", "TrigPolynomial", "assemble", "fixed_points_linear",
    "fixed_points_perturbed", "periodic_points_linear", "resonances", "trace_matrix", "trace_orbit",
    "validate_hyperbolic",
]
__version__ = "0.1.0"
