"""Numerical laboratory for the Alt-Phillips free-boundary problem with negative exponents.

Modules
-------
exponents   scaling algebra (beta, s, c_beta), the 1D solution, dimension windows
fields      grid fields, finite differences, weighted quadrature, interface extraction
minimize    discrete energies and the projected descent minimizer
hodograph   partial hodograph transform and the weighted quasilinear solver
cones       axially symmetric homogeneous profiles by shooting
stability   second variation, inner-variation oracle, axial and cutoff arguments
spectrum    weighted spherical eigenvalues, Hardy constants, asymptotic sweeps
cli         command line front end driven by JSON manifests
"""

from .exponents import (
    DimensionWindow,
    DomainError,
    ExponentPack,
    d7_gamma_threshold,
    dimension_window,
    make_exponents,
    one_dim_solution,
    u_to_w,
    w_to_u,
)
from .fields import ScalarField

__version__ = "0.1.0"

__all__ = [
    "DimensionWindow",
    "DomainError",
    "ExponentPack",
    "ScalarField",
    "d7_gamma_threshold",
    "dimension_window",
    "make_exponents",
    "one_dim_solution",
    "u_to_w",
    "w_to_u",
]
