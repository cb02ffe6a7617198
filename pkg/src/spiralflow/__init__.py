"""Crystalline spiral growth: level-set minimizing movements and a front-tracking reference."""

__version__ = "0.1.0"

from .anisotropy import PolyhedralAnisotropy, preset, shrink, shrink_many
from .bregman import SolverParams, evolve, minimize_step, rescale_bcf
from .domain import Grid, PhaseField, SpiralCenters, constant_phase
from .front_tracking import FacetChain, evolve_ft
from .metrics import area_A, distance_D, extract_contour

__all__ = [
    "FacetChain", "Grid", "PhaseField", "PolyhedralAnisotropy", "SolverParams",
    "SpiralCenters", "area_A", "constant_phase", "distance_D", "evolve", "evolve_ft",
    "extract_contour", "minimize_step", "preset", "rescale_bcf", "shrink", "shrink_many",
]
