"""Flux regularity toolkit for quasilinear elliptic equations of p-Laplace type.

Solves ``-div(a(|grad u|) grad u) = f`` on planar grid domains, computes the
flux ``V = a(|grad u|) grad u`` and measures its Sobolev norms, and checks
the algebraic inequalities behind the second-order estimates numerically.
"""

__version__ = "0.1.0"

from .errors import FluxRegError
from .estimates import flux, gallery_counterexample, global_estimate, local_estimate
from .grid import GridDomain, ScalarField, VectorField
from .matrix_lemma import min_constant, psi, psi_reduced
from .rearrangement import lorentz_norm, marcinkiewicz_norm, weak_log_norm
from .simplex_forms import nonnegativity_sweep, phi_determinant, phi_product, phi_symmetric
from .solver import SolveOptions, approximation_sequence, solve_dirichlet, solve_neumann
from .structure import StructureFunction, constant, power_law, regularize

__all__ = [
    "FluxRegError",
    "GridDomain",
    "ScalarField",
    "SolveOptions",
    "StructureFunction",
    "VectorField",
    "__version__",
    "approximation_sequence",
    "constant",
    "flux",
    "gallery_counterexample",
    "global_estimate",
    "local_estimate",
    "lorentz_norm",
    "marcinkiewicz_norm",
    "min_constant",
    "nonnegativity_sweep",
    "phi_determinant",
    "phi_product",
    "phi_symmetric",
    "power_law",
    "psi",
    "psi_reduced",
    "regularize",
    "solve_dirichlet",
    "solve_neumann",
    "weak_log_norm",
]
