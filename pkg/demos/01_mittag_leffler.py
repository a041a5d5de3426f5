"""Mittag-Leffler evaluation: routes, accuracy against closed forms, decay.

Run: python3 demos/01_mittag_leffler.py
"""

import numpy as np
from scipy.special import erfcx

from fracdn.mlf import ml, ml_with_info

routes = {0: "series", 1: "asymptotic", 2: "contour"}

# E_{1/2,1}(-x) = exp(x^2) erfc(x), computed stably by erfcx
x = np.array([0.1, 1.0, 5.0, 30.0, 300.0])
v, how, err = ml_with_info(0.5, 1.0, -x + 0j)
print("E_1/2(-x) against erfcx")
for xi, vi, hi, ei in zip(x, v, how, err):
    print(f"  x={xi:7.1f}  E={vi.real:.16e}  |diff|={abs(vi - erfcx(xi)):.1e}  route={routes[int(hi)]}  est={ei:.1e}")

# E_{2,1}(-x^2) = cos x, the wave end of the range
x = np.linspace(0, 20, 6)
print("max |E_2(-x^2) - cos x| =", np.max(np.abs(ml(2.0, 1.0, -x**2 + 0j) - np.cos(x))))

# t^(alpha-1) E_{alpha,alpha}(-lam t^alpha) is the kernel of the forward solver;
# for alpha < 1 it decays like t^(-1-alpha), not exponentially
lam, alpha = 10.0, 0.6
t = np.geomspace(1e-2, 1e3, 6)
k = t ** (alpha - 1) * ml(alpha, alpha, -lam * t**alpha + 0j).real
print("kernel t^(1+alpha) * K(t):", np.round(t ** (1 + alpha) * k, 6))
