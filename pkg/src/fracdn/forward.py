"""Forward solvers for the time-fractional Dirichlet problem.

The spectral route integrates the Mittag-Leffler kernel against the time
profile exactly on each step (product integration). The oracle route is a
plain implicit time stepper (L1-type Caputo discretization) on the same
finite-difference operator and shares nothing with the spectral path except
the spatial stencil.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial import Polynomial
from scipy.special import gamma

from .domain import BoundaryPatch, CoefficientField, Grid, inner_product_rho
from .mlf import ml
from .spectral import (
    BoundarySpectralData,
    EigenSystem,
    assemble,
    boundary_flux,
    elliptic_lift,
)

__all__ = [
    "PolyBump",
    "BoundaryInput",
    "Trajectory",
    "caputo_derivative",
    "solution_operators",
    "kernel_weights",
    "kernel_convolution",
    "bump_convolution_exact",
    "boundary_moments",
    "solve_spectral",
    "solve_oracle",
    "relative_error_rho",
]


def _check_alpha(alpha):
    # alpha = 1 is admitted as the classical limit used for cross-checks
    if not 0 < alpha < 2:
        raise ValueError(f"alpha must lie in (0,1) or (1,2), got {alpha}")


@dataclass(frozen=True)
class PolyBump:
    """``amp * (tau/w)^p (1 - tau/w)^p`` for ``tau = t - start`` in [0, w], zero elsewhere."""

    width: float
    p: int
    amplitude: float = 1.0
    start: float = 0.0

    @classmethod
    def for_order(cls, alpha, width, amplitude=1.0, start=0.0):
        return cls(width, int(math.floor(alpha)) + 2, amplitude, start)

    @property
    def support(self):
        return (self.start, self.start + self.width)

    def poly(self):
        """The bump as a polynomial in ``tau = t - start``."""
        s = Polynomial([0.0, 1.0 / self.width])
        return self.amplitude * s**self.p * (1 - s) ** self.p

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        tau = (t - self.start) / self.width
        inside = (tau > 0) & (tau < 1)
        tc = np.where(inside, tau, 0.0)
        return np.where(inside, self.amplitude * tc**self.p * (1 - tc) ** self.p, 0.0)

    def to_dict(self):
        return {"kind": "PolyBump", "width": self.width, "p": self.p, "amplitude": self.amplitude, "start": self.start}


@dataclass(frozen=True)
class BoundaryInput:
    """Separable Dirichlet datum ``f(t, x) = g(t) h(x)`` with ``h`` supported on ``patch``.

    ``h`` is a nodal field on the full grid. ``T`` is the final time of the
    solve and ``T0`` the measurement time.
    """

    g: PolyBump
    h: np.ndarray
    patch: BoundaryPatch
    T0: float
    T: float | None = None

    def __post_init__(self):
        grid = self.patch.grid
        h = np.asarray(self.h, dtype=float)
        if h.shape != grid.shape:
            raise ValueError("h must be a nodal field on the patch grid")
        off = h.copy()
        off[tuple(np.array(self.patch.node_indices).T)] = 0.0
        if np.any(off != 0):
            raise ValueError("h must vanish off the input patch")
        lo, hi = self.g.support
        if lo < 0 or hi > self.T0 + 1e-14:
            raise ValueError("time profile support must lie in (0, T0)")
        object.__setattr__(self, "h", h)
        if self.T is None:
            object.__setattr__(self, "T", self.T0)

    @property
    def grid(self):
        return self.patch.grid

    def scaled(self, c):
        g = PolyBump(self.g.width, self.g.p, self.g.amplitude * c, self.g.start)
        return BoundaryInput(g, self.h, self.patch, self.T0, self.T)

    def to_dict(self):
        return {
            "g": self.g.to_dict(),
            "h": self.patch.take(self.h).tolist(),
            "patch": self.patch.to_dict(),
            "T0": self.T0,
            "T": self.T,
        }


@dataclass
class Trajectory:
    """Time samples, nodal fields and rho-coefficients of a computed solution."""

    t: np.ndarray
    fields: np.ndarray
    modes: np.ndarray | None
    grid: Grid
    alpha: float
    source: str
    meta: dict = field(default_factory=dict)

    def at(self, time):
        k = int(np.argmin(np.abs(self.t - time)))
        if abs(self.t[k] - time) > 1e-9 * max(1.0, abs(time)):
            raise ValueError(f"time {time} is not a sample of the trajectory")
        return self.fields[k]

    def save(self, json_path, csv_path=None, slice_nodes=None):
        meta = {
            "source": self.source,
            "alpha": self.alpha,
            "grid": self.grid.to_dict(),
            "n_times": len(self.t),
            "t_final": float(self.t[-1]),
            **self.meta,
        }
        if csv_path is not None:
            meta["csv"] = str(csv_path)
            nodes = [] if slice_nodes is None else list(slice_nodes)
            with open(csv_path, "w", newline="") as fh:
                w = csv.writer(fh)
                nm = 0 if self.modes is None else self.modes.shape[1]
                w.writerow(["t"] + [f"u_{n + 1}" for n in range(nm)] + [f"u{tuple(ix)}" for ix in nodes])
                for k, tk in enumerate(self.t):
                    row = [tk]
                    if nm:
                        row += list(self.modes[k])
                    row += [self.fields[k][tuple(ix)] for ix in nodes]
                    w.writerow([f"{v + 0.0:.17g}" for v in row])
        with open(json_path, "w") as fh:
            json.dump(meta, fh, indent=2)


def relative_error_rho(u, ref, coeffs, grid):
    """``||u - ref||_rho / ||ref||_rho`` with trapezoid weights."""
    d = np.asarray(u) - np.asarray(ref)
    num = inner_product_rho(d, d, coeffs, grid)
    den = inner_product_rho(ref, ref, coeffs, grid)
    return float(np.sqrt(num / den))


def _l1_weights(beta, n):
    j = np.arange(n, dtype=float)
    return (j + 1) ** (1 - beta) - j ** (1 - beta)


def caputo_derivative(samples, t, alpha):
    """Caputo derivative of uniformly sampled data (first axis is time).

    For alpha < 1 this is the L1 scheme. For alpha in (1, 2) the first
    derivative is formed by second-order differences and the L1 scheme of
    order ``alpha - 1`` is applied to it. The value at ``t[0]`` is 0.
    """
    _check_alpha(alpha)
    u = np.asarray(samples, dtype=float)
    t = np.asarray(t, dtype=float)
    if len(t) < 3:
        raise ValueError("need at least three samples")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-10, atol=0):
        raise ValueError("caputo_derivative needs a uniform grid")
    dt = dt[0]
    if alpha > 1:
        u = np.gradient(u, dt, axis=0, edge_order=2)
        beta = alpha - 1
    else:
        beta = alpha
    n = len(t)
    b = _l1_weights(beta, n)
    du = np.diff(u, axis=0)
    out = np.zeros_like(u)
    c = dt ** (-beta) / gamma(2 - beta)
    for k in range(1, n):
        # sum_{j=0}^{k-1} b_j (u_{k-j} - u_{k-j-1})
        out[k] = c * np.tensordot(b[:k], du[k - 1 :: -1][:k], axes=(0, 0))
    return out


def solution_operators(es, alpha, t, h):
    """``(S0(t) h, S(t) h)`` over the modes of ``es``."""
    if t <= 0:
        raise ValueError("t must be positive")
    c = es.coefficients(h)
    z = -es.eigenvalues * t**alpha
    e1 = ml(alpha, 1.0, z)
    ea = ml(alpha, alpha, z)
    modes = es.nodal().reshape(es.n_modes, -1)
    s0 = ((e1 * c) @ modes).reshape(es.grid.shape)
    s = (t ** (alpha - 1) * (ea * c) @ modes).reshape(es.grid.shape)
    return s0, s


def kernel_weights(alpha, lam, dt, n_steps):
    """Product-integration weights ``W[n, i]`` for ``int_0^{t_k} K(s) g(t_k - s) ds``.

    ``K(s) = s^(alpha-1) E_{alpha,alpha}(-lam s^alpha)`` and g is replaced by its
    piecewise-linear interpolant, so ``conv(t_k) = sum_i W[i] g_{k-i}``. The
    weights come from the exact antiderivatives
    ``I1(s) = s^alpha E_{alpha,alpha+1}(-lam s^alpha)`` and
    ``J(s) = int_0^s I1 = s^(alpha+1) E_{alpha,alpha+2}(-lam s^alpha)``.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    s = dt * np.arange(n_steps + 1)
    sa = s**alpha
    z = -np.outer(lam, sa)
    I1 = sa * ml(alpha, alpha + 1, z)
    J = sa * s * ml(alpha, alpha + 2, z)
    dJ = np.diff(J, axis=1) / dt
    A = dJ - I1[:, :-1]
    B = I1[:, 1:] - dJ
    W = np.zeros((len(lam), n_steps + 1))
    W[:, :-1] += A
    W[:, 1:] += B
    return W


def kernel_convolution(alpha, lam, g_samples, dt):
    """``int_0^{t_k} K_lam(s) g(t_k - s) ds`` at every sample, one row per lam."""
    g = np.asarray(g_samples, dtype=float)
    n = len(g) - 1
    W = kernel_weights(alpha, lam, dt, n)
    out = np.empty_like(W)
    for r in range(W.shape[0]):
        out[r] = np.convolve(W[r], g)[: n + 1]
    return out


def _poly_kernel_conv(alpha, lam, poly, tau):
    """``int_0^tau K_lam(s) P(tau - s) ds`` for a polynomial P, zero for tau <= 0."""
    tau = np.asarray(tau, dtype=float)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    pos = tau > 0
    tp = np.where(pos, tau, 1.0)
    out = np.zeros(np.broadcast(lam[:, None], tp[None, :]).shape)
    z = -np.outer(lam, tp**alpha)
    for j, cj in enumerate(poly.coef):
        if cj == 0:
            continue
        out += cj * math.factorial(j) * tp ** (alpha + j) * ml(alpha, alpha + j + 1, z)
    return np.where(pos, out, 0.0)


def bump_convolution_exact(alpha, lam, bump, t):
    """Closed form of ``int_0^t K_lam(s) g(t - s) ds`` for a polynomial bump g.

    Uses ``K * t^j = j! t^(alpha+j) E_{alpha,alpha+j+1}(-lam t^alpha)`` on the
    two polynomial pieces that switch the bump on and off.
    """
    q = bump.poly()
    q_end = q(Polynomial([bump.width, 1.0]))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    on = _poly_kernel_conv(alpha, lam, q, t - bump.start)
    off = _poly_kernel_conv(alpha, lam, q_end, t - bump.start - bump.width)
    return on - off


def boundary_moments(bsd, inp):
    """``int_{S_in} h psi_n`` for every mode (point values in 1D)."""
    hv = inp.patch.take(inp.h)
    return bsd.flux_on(inp.patch) @ (inp.patch.weights() * hv)


def solve_spectral(inp, es, alpha, n_steps, coeffs=None, bsd=None):
    """Mittag-Leffler expansion of the solution on a uniform grid over ``[0, T]``.

    Mode coefficients follow ``u_n = -(K_n * g) int h psi_n``. Fields use the
    lifted form ``u = g w + sum (u_n - g <w, phi_n>) phi_n`` with ``w`` the
    elliptic lift of h, which converges up to the boundary.
    """
    _check_alpha(alpha)
    coeffs = es.coeffs if coeffs is None else coeffs
    if bsd is None:
        bsd = boundary_flux(es, coeffs, inp.patch)
    grid = es.grid
    t = np.linspace(0.0, inp.T, n_steps + 1)
    g = inp.g(t)
    b = boundary_moments(bsd, inp)
    conv = kernel_convolution(alpha, es.eigenvalues, g, t[1] - t[0])
    modes = -(conv * b[:, None]).T
    w = elliptic_lift(inp.h, coeffs, grid)
    cw = es.coefficients(w)
    phi = es.nodal().reshape(es.n_modes, -1)
    fields = np.outer(g, w.ravel()) + (modes - np.outer(g, cw)) @ phi
    fields = fields.reshape((len(t),) + grid.shape)
    return Trajectory(t, fields, modes, grid, alpha, "spectral", {"n_modes": es.n_modes})


def solve_oracle(inp, coeffs, alpha, n_steps):
    """Implicit finite-difference time stepping, independent of the eigensystem.

    alpha < 1: L1 scheme at ``t_n``. alpha in (1, 2): the order ``2 - alpha``
    fractional integral of the piecewise-constant velocity is differenced
    across ``t_n`` and ``t_{n-1}``, giving a scheme centred at ``t_{n-1/2}``
    with Crank-Nicolson averaging of the spatial operator. Initial value and
    velocity are zero. alpha = 1 is backward Euler.
    """
    _check_alpha(alpha)
    grid = inp.grid
    op = assemble(coeffs, grid)
    KII = op.K_II.tocsc()
    KIB = op.K_IB
    M = sp.diags(op.mass)
    t = np.linspace(0.0, inp.T, n_steps + 1)
    dt = t[1] - t[0]
    hB = inp.h.ravel()[op.boundary]
    g = inp.g(t)
    nI = len(op.interior)
    U = np.zeros((n_steps + 1, nI))
    dU = np.zeros((n_steps + 1, nI))  # dU[k] = U[k] - U[k-1]
    mass = op.mass
    if alpha <= 1:
        c = dt ** (-alpha) / gamma(2 - alpha)
        b = _l1_weights(alpha, n_steps + 1)
        lu = spla.splu((c * M + KII).tocsc())
        for n in range(1, n_steps + 1):
            # history: sum_{j=1}^{n-1} b_j dU[n-j]
            hist = b[1:n] @ dU[n - 1 : 0 : -1] if n > 1 and alpha < 1 else 0.0
            rhs = c * mass * (U[n - 1] - hist) - KIB @ (g[n] * hB)
            U[n] = lu.solve(rhs)
            dU[n] = U[n] - U[n - 1]
    else:
        c = dt ** (-alpha) / gamma(3 - alpha)
        a = _l1_weights(alpha - 1, n_steps + 1)  # (k+1)^(2-alpha) - k^(2-alpha)
        da = np.diff(a)  # a_{m} - a_{m-1} at index m-1
        lu = spla.splu((c * M + 0.5 * KII).tocsc())
        for n in range(1, n_steps + 1):
            # sum_{k=1}^{n-1} (a_{n-k} - a_{n-1-k}) dU[k]
            hist = da[: n - 1][::-1] @ dU[1:n] if n > 1 else 0.0
            rhs = (
                c * mass * (U[n - 1] - hist)
                - 0.5 * (KII @ U[n - 1])
                - KIB @ (0.5 * (g[n] + g[n - 1]) * hB)
            )
            U[n] = lu.solve(rhs)
            dU[n] = U[n] - U[n - 1]
    fields = np.zeros((n_steps + 1, int(np.prod(grid.shape))))
    fields[:, op.interior] = U
    fields[:, op.boundary] = np.outer(g, hB)
    fields = fields.reshape((n_steps + 1,) + grid.shape)
    return Trajectory(t, fields, None, grid, alpha, "oracle", {"n_steps": n_steps})
