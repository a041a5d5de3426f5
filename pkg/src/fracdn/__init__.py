"""Fractional diffusion-wave Dirichlet-to-Neumann maps and boundary spectral inversion."""

from .mlf import ml, ml_with_info
from .domain import Grid, CoefficientField, BoundaryPatch
from .spectral import assemble, eigensolve, boundary_flux, BoundarySpectralData, EigenSystem

__version__ = "0.1.0"
