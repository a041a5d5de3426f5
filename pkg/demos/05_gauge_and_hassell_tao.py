"""Gauge equivalence and the Hassell-Tao boundary ratio.

Two coefficient sets related by a gauge kappa (equal to 1 near the boundary)
produce the same DN map; a non-gauge perturbation of the same size does not.
"""

import numpy as np

from fracdn.acceptance import gauge_desk_pair
from fracdn.domain import BoundaryPatch, CoefficientField, Grid
from fracdn.forward import BoundaryInput, PolyBump
from fracdn.inverse import gauge_invariance_check, hassell_tao_ratio
from fracdn.spectral import assemble, boundary_flux, eigensolve, full_boundary_patch

alpha = 0.5
pair = gauge_desk_pair(512)
both = full_boundary_patch(pair.grid)
left = BoundaryPatch(pair.grid, (("left",),))
inputs = [BoundaryInput(PolyBump.for_order(alpha, 0.5), left.scatter(np.ones(1)), left, T0=0.8)]
d = gauge_invariance_check(pair, inputs, alpha, both)
dc = gauge_invariance_check(pair, inputs, alpha, both, control=True)
print(f"gauge pair discrepancy {d:.2e}, control {dc:.2e}")

# lambda_n^-1 |psi_n|^2 on a boundary patch stays bounded above and below
g = Grid((1.0, 1.0), (32, 32))
es = eigensolve(assemble(CoefficientField.constant(g), g), 40)
bsd = boundary_flux(es, patch=full_boundary_patch(g))
ratios, sup, flagged = hassell_tao_ratio(bsd, BoundaryPatch(g, (("left",), ("bottom",))))
print(f"ratios in [{ratios.min():.3f}, {ratios.max():.3f}], flagged modes: {flagged.tolist()}")
