"""Forward problem on a rod: spectral product integration against time stepping.

A boundary pulse enters at x = 0; the field is compared with an L1 time-stepping
solution at T0 for a subdiffusive and a wave-like order.
"""

import numpy as np

from fracdn.domain import BoundaryPatch, CoefficientField, Grid
from fracdn.forward import BoundaryInput, PolyBump, relative_error_rho, solve_oracle, solve_spectral
from fracdn.spectral import assemble, eigensolve

g = Grid((1.0,), (256,))
x = g.axes()[0]
c = CoefficientField(1 + 0.2 * x, 1 + 0.3 * x**2, 5.0 + 0 * x)
left = BoundaryPatch(g, (("left",),), "in")
h = left.scatter(np.ones(1))
es = eigensolve(assemble(c, g), 255)

for alpha in (0.5, 1.5):
    inp = BoundaryInput(PolyBump.for_order(alpha, 0.4), h, left, T0=0.6)
    sol = solve_spectral(inp, es, alpha, 600, coeffs=c)
    orc = solve_oracle(inp, c, alpha, 4000)
    err = relative_error_rho(sol.at(0.6), orc.at(0.6), c, g)
    print(f"alpha={alpha}: max u(T0)={np.abs(sol.at(0.6)).max():.4f}  rel L2_rho gap to oracle={err:.2e}")
