"""Finite-element experiments for Liouville-type equations on planar domains.

Modules:
    geometry    domains, meshes, quadrature and Green's functions
    field       nodal fields, level sets, masses and layer cakes
    comparison  bubbles, radial profiles, rearrangement and radial checks
    problems    equation variants, discrete residuals and transforms
    solver      Newton, multi-start and parameter continuation
    verify      theorem-level experiments producing ExperimentReports
    cli         command line front-end
"""

from __future__ import annotations

__version__ = "0.1.0"

from .comparison import BubbleParam, RadialProfile, bubble_mass, bubble_pair, bubble_radius, bubble_value
from .field import ScalarField, symmetry_defect, weighted_mass
from .geometry import BoundaryData, DomainSpec, Mesh, build_mesh, refine_mesh
from .problems import ProblemSpec, validate
from .solver import assemble, continuation, multi_start, newton_solve
from .verify import ExperimentReport

__all__ = [
    "BubbleParam", "RadialProfile", "bubble_mass", "bubble_pair", "bubble_radius", "bubble_value",
    "ScalarField", "symmetry_defect", "weighted_mass", "BoundaryData", "DomainSpec", "Mesh", "build_mesh",
    "refine_mesh", "ProblemSpec", "validate", "assemble", "continuation", "multi_start", "newton_solve",
    "ExperimentReport", "__version__",
]
