"""Recovery of boundary spectral data from the Laplace-domain pole structure.

The Laplace transform of ``t^(alpha+1) E_{alpha,alpha}(-lam t^alpha)`` is a
rational function of ``z = p^alpha`` with a triple pole at ``z = -lam``.
Summing over modes and continuing to the negative real axis, each eigenvalue
shows up as a triple pole whose leading coefficient carries the boundary
kernel. The stripping loop locates poles one at a time from the origin,
extracts the coefficient by Richardson extrapolation and removes the term.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .domain import (
    CoefficientField,
    ManifoldCoefficients,
    isotropic_to_manifold,
    manifold_to_isotropic,
    normal_derivative,
)
from .dnmap import DN_SIGN, TruncationWarning, dn_apply, relative_discrepancy
from .forward import boundary_moments
from .spectral import assemble, boundary_flux, eigensolve, weighted_laplacian

__all__ = [
    "SeriesModel",
    "RecoveredBSD",
    "GaugePair",
    "PoleLocationError",
    "laplace_kernel",
    "pole_structure",
    "series_model",
    "p_domain_transform",
    "pole_locate",
    "strip_poles",
    "gauge_transform",
    "gauge_invariance_check",
    "hassell_tao_ratio",
    "sine_convolution",
    "hyperbolic_dn",
    "smooth_bump",
]


class PoleLocationError(RuntimeError):
    pass


def laplace_kernel(p, lam, alpha):
    """Laplace transform of ``t^(alpha+1) E_{alpha,alpha}(-lam t^alpha)`` at p (Re p > 0)."""
    p = np.asarray(p, dtype=complex)
    if np.any(p.real <= 0):
        raise ValueError("laplace_kernel needs Re p > 0")
    pa = p**alpha
    out = p ** (alpha - 2) * (2 * alpha**2 * pa - alpha * (alpha - 1) * (pa + lam)) / (pa + lam) ** 3
    return out


def pole_structure(z, lam, alpha):
    """``(2 alpha^2 z - alpha (alpha-1)(z + lam)) / (z + lam)^3``; its continuation in ``z = p^alpha``."""
    z = np.asarray(z)
    return (2 * alpha**2 * z - alpha * (alpha - 1) * (z + lam)) / (z + lam) ** 3


@dataclass
class SeriesModel:
    """Series ``sum_n weights[n] * k(lam_n)`` with ``weights[n, x, i] = int Theta_n(x, y) h_i(y)``."""

    alpha: float
    eigenvalues: np.ndarray
    weights: np.ndarray
    basis_weights: np.ndarray | None = None

    def sector(self, z):
        from .mlf import ml

        z = np.atleast_1d(np.asarray(z, dtype=complex))
        E = ml(self.alpha, self.alpha, -np.outer(z, self.eigenvalues))
        return np.tensordot(E, self.weights, axes=(1, 0))

    def laplace(self, p):
        p = np.atleast_1d(np.asarray(p, dtype=complex))
        k = np.stack([laplace_kernel(p, lam, self.alpha) for lam in self.eigenvalues], axis=1)
        return np.tensordot(k, self.weights, axes=(1, 0))

    def continuation(self, z):
        """Analytic continuation in ``z = p^alpha``; valid off the poles ``-lam_n``."""
        z = np.asarray(z, dtype=float)
        return np.tensordot(pole_structure(z, self.eigenvalues, self.alpha), self.weights, axes=(0, 0))

    def to_dict(self):
        return {
            "kind": "SeriesModel",
            "alpha": self.alpha,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "weights": self.weights.tolist(),
            "basis_weights": None if self.basis_weights is None else self.basis_weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        bw = d.get("basis_weights")
        return cls(
            float(d["alpha"]),
            np.array(d["eigenvalues"], dtype=float),
            np.array(d["weights"], dtype=float),
            None if bw is None else np.array(bw, dtype=float),
        )


def series_model(bsd, alpha, s_in, s_out):
    """Series model over the nodal hat basis of ``s_in`` (one profile per node)."""
    psi_out = bsd.flux_on(s_out)
    psi_in = bsd.flux_on(s_in)
    w = s_in.weights()
    weights = psi_out[:, :, None] * (psi_in * w)[:, None, :]
    return SeriesModel(alpha, bsd.eigenvalues.copy(), weights, w)


def p_domain_transform(model, p_grid):
    """``G(p, x) = sum_n (int Theta_n h) laplace_kernel(p, lam_n, alpha)``."""
    p = np.atleast_1d(np.asarray(p_grid, dtype=complex))
    bad = (np.abs(p.imag) == 0) & (p.real <= 0)
    if np.any(bad):
        raise ValueError("p must not lie on the closed negative real axis")
    return model.laplace(p)


@dataclass
class RecoveredBSD:
    """Recovered eigenvalues and kernels ``Theta_n`` on S_out x S_in."""

    eigenvalues: np.ndarray
    kernels: list
    spreads: np.ndarray
    conditions: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "kind": "RecoveredBSD",
            "eigenvalues": [float(f"{v:.17g}") for v in self.eigenvalues],
            "kernels": [k.tolist() for k in self.kernels],
            "extrapolation_spread": self.spreads.tolist(),
            "pole_condition": self.conditions.tolist(),
            **self.meta,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _indicator(G, probe):
    def r(x):
        try:
            with np.errstate(divide="ignore", invalid="ignore"):
                s = float(np.sum(probe * G(-x)))
        except ZeroDivisionError:
            return 0.0  # evaluated exactly at a pole
        if not np.isfinite(s):
            return 0.0  # inf or inf - inf at an exact pole
        if s == 0.0:
            return np.inf
        return 1.0 / np.cbrt(s)

    return r


def _root_is_pole(r, a, b, root):
    ra, rb, r0 = abs(r(a)), abs(r(b)), abs(r(root))
    return r0 <= 1e-3 * min(ra, rb), r0 / max(min(ra, rb), 1e-300)


def pole_locate(G, bracket, probe=None, xtol=1e-14, n_probe=64):
    """Locate the single pole of ``G`` in a bracket ``(z_a, z_b)`` on the negative axis.

    Returns ``(lam_hat, err)`` where the pole sits at ``z = -lam_hat``. The
    indicator ``1/cbrt(G)`` vanishes at a triple pole and blows up at a zero,
    so sign changes are classified by the indicator's size at the root.
    """
    za, zb = sorted(bracket)
    if zb >= 0:
        raise ValueError("bracket must lie on the negative real axis")
    if probe is None:
        # shape probe off-centre, away from where a pole is likely to sit exactly
        probe = np.ones_like(np.asarray(G(za + 0.382 * (zb - za))), dtype=float)
    r = _indicator(G, probe)
    xa, xb = -zb, -za
    xs = np.linspace(xa, xb, n_probe + 1)
    rv = np.array([r(x) for x in xs])
    poles = []
    for k in range(n_probe + 1):
        if rv[k] == 0 and 0 < k < n_probe:
            # sample landed on the pole itself
            if _root_is_pole(r, xs[k - 1], xs[k + 1], xs[k])[0]:
                poles.append((xs[k], xs[k + 1] - xs[k - 1]))
            continue
        if k == n_probe or rv[k] == 0 or rv[k + 1] == 0:
            continue
        if np.sign(rv[k]) != np.sign(rv[k + 1]) and np.isfinite(rv[k]) and np.isfinite(rv[k + 1]):
            root = brentq(r, xs[k], xs[k + 1], xtol=xtol * max(1.0, xs[k]), rtol=4 * np.finfo(float).eps)
            ok, _ = _root_is_pole(r, xs[k], xs[k + 1], root)
            if ok:
                poles.append((root, xs[k + 1] - xs[k]))
    if not poles:
        raise PoleLocationError("no sign change of the pole indicator in the bracket")
    if len(poles) > 1:
        raise PoleLocationError(f"{len(poles)} poles in the bracket")
    root, width = poles[0]
    return root, xtol * max(1.0, root)


def _neville_zero(eps, vals):
    """Polynomial extrapolation to eps = 0; returns (value, spread vs one fewer point)."""
    P = [v.copy() for v in vals]
    n = len(eps)
    prev = None
    for m in range(1, n):
        for i in range(n - m):
            P[i] = (eps[i + m] * P[i] - eps[i] * P[i + 1]) / (eps[i + m] - eps[i])
        if m == n - 2:
            prev = P[0].copy()
    return P[0], np.max(np.abs(P[0] - prev))


def strip_poles(G, n_target, alpha, basis_weights=None, x_start=0.0, x_max=1e8, rel_step=1e-3, abs_step=1e-3,
                n_richardson=7, seed=0):
    """Peel triple poles of the continuation ``G(z)`` off the negative real axis.

    ``G`` maps a real z to an array (S_out x basis). For each pole, the limit
    ``L = lim (z + lam)^3 G(z)`` is obtained by Richardson extrapolation along
    ``z = -lam + eps_k``, ``eps_k = 2^-k eps0``, and the kernel follows from
    ``L / (-2 alpha^2 lam)``. The identified term is subtracted before the
    search continues outward.
    """
    shape = np.shape(G(-0.5))
    probe = np.random.default_rng(seed).standard_normal(shape)
    lams, coefs, spreads, conds = [], [], [], []

    def resid(z):
        out = np.array(G(z), dtype=float)
        for lam, c in zip(lams, coefs):
            out = out - c * pole_structure(z, lam, alpha)
        return out

    r = _indicator(resid, probe)
    x = x_start
    rx = r(x) if x > 0 else r(1e-12)
    while len(lams) < n_target:
        step = max(abs_step, rel_step * x)
        xn = x + step
        if xn > x_max:
            raise PoleLocationError(f"found {len(lams)} of {n_target} poles below {x_max:g}")
        rn = r(xn)
        if np.isfinite(rx) and np.isfinite(rn) and np.sign(rx) != np.sign(rn):
            root = brentq(r, x, xn, xtol=1e-15 * max(1.0, xn), rtol=4 * np.finfo(float).eps)
            ok, cond = _root_is_pole(r, x, xn, root)
            if ok:
                prev = lams[-1] if lams else 0.0
                eps0 = 0.1 * min(root - prev, root) if prev else 0.1 * root
                eps = eps0 * 2.0 ** -np.arange(n_richardson)
                vals = [e**3 * resid(-root + e) for e in eps]
                L, spread = _neville_zero(eps, vals)
                c = L / (-2 * alpha**2 * root)
                lams.append(root)
                coefs.append(c)
                spreads.append(spread / max(np.max(np.abs(L)), 1e-300))
                conds.append(cond)
                # restart just past the stripped pole where the subtraction is well conditioned
                xn = root * (1 + 1e-3) + 1e-12
                rn = r(xn)
        x, rx = xn, rn
    kernels = []
    for c in coefs:
        k = np.asarray(c, dtype=float)
        if basis_weights is not None:
            k = k / np.asarray(basis_weights)[None, :]
        kernels.append(k)
    return RecoveredBSD(
        np.array(lams), kernels, np.array(spreads), np.array(conds),
        {"alpha": alpha, "n_richardson": n_richardson, "rel_step": rel_step},
    )


# -- gauge transformations ---------------------------------------------------


def smooth_bump(grid, center, radius, amplitude):
    """``1 + amplitude * exp(1 - 1/(1 - r^2))`` for ``r < 1``, exactly 1 elsewhere."""
    X = grid.coords()
    r2 = sum(((Xi - c) / radius) ** 2 for Xi, c in zip(X, np.atleast_1d(center)))
    inside = r2 < 1
    val = np.zeros_like(r2)
    val[inside] = np.exp(1 - 1 / (1 - r2[inside]))
    return 1 + amplitude * val


@dataclass
class GaugePair:
    kappa: np.ndarray
    source: ManifoldCoefficients
    image: ManifoldCoefficients
    grid: object

    def coefficients(self):
        d = self.grid.dim
        return manifold_to_isotropic(self.source, d), manifold_to_isotropic(self.image, d)


def gauge_transform(mc1, kappa, grid, bc_tol=1e-8):
    """Gauge image ``(mu2, q2) = (kappa^-2 mu1, q1 - kappa Lap_{g,mu1} kappa^-1)``.

    The weighted Laplacian uses the same stencil as the elliptic operator.
    """
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa <= 0):
        raise ValueError("kappa must be positive")
    bmask = grid.boundary_mask
    if np.max(np.abs(kappa[bmask] - 1)) > bc_tol:
        raise ValueError("kappa must equal 1 on the boundary")
    from .domain import BoundaryPatch

    c1 = manifold_to_isotropic(mc1, grid.dim)
    segs = (("left",), ("right",)) if grid.dim == 1 else tuple((e,) for e in ("left", "right", "bottom", "top"))
    dn = normal_derivative(kappa, CoefficientField(c1.rho, np.ones_like(c1.a), np.zeros_like(c1.V)), BoundaryPatch(grid, segs))
    if np.max(np.abs(dn)) > bc_tol:
        raise ValueError("kappa must have vanishing normal derivative on the boundary")
    lap = weighted_laplacian(c1, grid, 1.0 / kappa)
    delta = -kappa * lap
    delta[bmask] = 0.0
    q2 = mc1.q + delta
    mu2 = mc1.mu / kappa**2
    return ManifoldCoefficients(mc1.g_diag, mu2, q2)


def _dn_for(coeffs, grid, inputs, alpha, s_out, n_modes, bsd_patch):
    es = eigensolve(assemble(coeffs, grid), n_modes)
    bsd = boundary_flux(es, coeffs, bsd_patch)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        return np.concatenate([dn_apply(inp, bsd, alpha, s_out).flux for inp in inputs])


def gauge_invariance_check(pair, inputs, alpha, s_out, n_modes=None, control=False):
    """Relative max-norm DN discrepancy ``max|F2 - F1| / max|F1|`` between the pair.

    With ``control=True`` the comparison system keeps ``mu1`` and receives
    only the potential change ``q2 - q1``, a perturbation of equal sup-norm
    that is not a gauge transformation.
    """
    grid = pair.grid
    c1, c2 = pair.coefficients()
    if control:
        dq = pair.image.q - pair.source.q
        c2 = manifold_to_isotropic(ManifoldCoefficients(pair.source.g_diag, pair.source.mu, pair.source.q + dq), grid.dim)
    n = len(np.nonzero(~grid.boundary_mask.ravel())[0]) if n_modes is None else n_modes
    from .domain import BoundaryPatch

    segs = {s for inp in inputs for s in inp.patch.segments} | set(s_out.segments)
    union = BoundaryPatch(grid, tuple(sorted(segs)))
    f1 = _dn_for(c1, grid, inputs, alpha, s_out, n, union)
    f2 = _dn_for(c2, grid, inputs, alpha, s_out, n, union)
    return relative_discrepancy(f2, f1)


# -- diagnostics --------------------------------------------------------------


def hassell_tao_ratio(bsd, s_in):
    """Per-mode ``lambda_n / ||psi_n||^2_{L2(S_in)}`` and the running supremum.

    Modes with zero flux on the patch get ratio ``inf`` and are listed in
    ``flagged``.
    """
    psi = bsd.flux_on(s_in)
    norms = (psi**2 * s_in.weights()).sum(axis=1)
    with np.errstate(divide="ignore"):
        ratios = np.where(norms > 0, bsd.eigenvalues / np.where(norms > 0, norms, 1), np.inf)
    flagged = np.nonzero(~np.isfinite(ratios))[0]
    return ratios, np.maximum.accumulate(ratios), flagged


def sine_convolution(bump, omega, t):
    """``int_0^t g(t - s) sin(omega s) / omega ds`` in closed form for a polynomial bump.

    Repeated integration by parts on ``int Q(r) e^{-i omega r} dr`` over the
    part of the support already switched on. When the terms ``Q^(k) / omega^(k+1)``
    would cancel badly (small omega times width), Gauss-Legendre quadrature of
    the smooth integrand is used instead.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    q = bump.poly()
    derivs = [q.deriv(k) if k else q for k in range(q.degree() + 1)]
    lo, hi = bump.support
    b = np.clip(t, lo, hi)
    active = t > lo
    # size of the largest integration-by-parts term relative to the result scale
    dmax = np.array([np.max(np.abs(d(np.linspace(0, bump.width, 9)))) for d in derivs])
    k = np.arange(len(derivs))
    maxterm = np.max(dmax[None, :] / omega[:, None] ** (k[None, :] + 1), axis=1)
    small = maxterm > 10 * max(abs(bump.amplitude), 1e-300) * bump.width
    out = np.zeros((len(omega), len(t)))
    big = ~small
    if big.any():
        c = -1j * omega[big][:, None]

        def prim(r):
            # antiderivative of Q(r - lo) e^{c r}
            tau = r - lo
            acc = 0.0
            for kk, dq in enumerate(derivs):
                acc = acc + (-1) ** kk * dq(tau) / c ** (kk + 1)
            return np.exp(c * r) * acc

        val = prim(b[None, :]) - prim(np.full_like(b, lo)[None, :])
        out[big] = np.imag(np.exp(1j * omega[big][:, None] * t[None, :]) * val) / omega[big][:, None]
    if small.any():
        # int_lo^b Q(r - lo) sin(omega (t - r)) / omega dr
        x, w = np.polynomial.legendre.leggauss(64)
        r = lo + 0.5 * (b - lo)[:, None] * (x[None, :] + 1)
        wr = 0.5 * (b - lo)[:, None] * w[None, :]
        qv = q(r - lo)
        for i in np.nonzero(small)[0]:
            om = omega[i]
            out[i] = np.sum(wr * qv * np.sin(om * (t[:, None] - r)), axis=1) / om
    return np.where(active[None, :], out, 0.0)


def hyperbolic_dn(inp, bsd, t_grid, s_out, sign=DN_SIGN, n_modes=None, cesaro=True):
    """Wave-equation DN traces ``sum_n (g * sin(sqrt(lam_n) .)/sqrt(lam_n))(t) (int h psi_n) psi_n(x)``.

    With ``cesaro`` the partial sums are averaged over the last quarter of the
    modes. Returns an array (len(t_grid), n_out).
    """
    data = bsd if n_modes is None else bsd.truncated(n_modes)
    if np.any(data.eigenvalues <= 0):
        raise ValueError("hyperbolic series needs positive eigenvalues")
    b = boundary_moments(data, inp)
    S = sine_convolution(inp.g, np.sqrt(data.eigenvalues), t_grid)
    terms = (S * b[:, None])[:, :, None] * data.flux_on(s_out)[:, None, :]
    M = data.n_modes
    w = np.ones(M)
    if cesaro and M >= 4:
        m0 = M - M // 4
        ms = np.arange(m0, M + 1)  # partial sums S_m with m terms
        w = np.array([(ms >= n + 1).mean() for n in range(M)])
    return sign * np.tensordot(w, terms, axes=(0, 0))
