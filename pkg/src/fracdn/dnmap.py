"""Partial Dirichlet-to-Neumann map at a fixed time and its sector function."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .domain import BoundaryPatch, normal_derivative
from .forward import BoundaryInput, boundary_moments, bump_convolution_exact, solve_oracle
from .mlf import ml

__all__ = [
    "DN_SIGN",
    "DNMeasurement",
    "SectorSample",
    "TruncationWarning",
    "dn_apply",
    "dn_oracle",
    "calibrate_sign",
    "default_theta0",
    "theta0_window",
    "default_z_grid",
    "sector_eval",
    "relative_discrepancy",
]

# Global sign of the representation formula, fixed by calibration against
# the time-stepping oracle (see calibrate_sign).
DN_SIGN = -1


class TruncationWarning(UserWarning):
    pass


@dataclass
class DNMeasurement:
    """Flux ``a d_nu u(T0, .)`` on the output patch."""

    input: BoundaryInput
    T0: float
    flux: np.ndarray
    s_out: BoundaryPatch
    provenance: str
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "kind": "DNMeasurement",
            "provenance": self.provenance,
            "T0": self.T0,
            "input": self.input.to_dict(),
            "s_out": self.s_out.to_dict(),
            "flux": [float(f"{v:.17g}") for v in self.flux],
            **self.meta,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def relative_discrepancy(a, b):
    """``max|a - b| / max|b|``."""
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def _check_tail(terms, tol):
    # terms: (n_modes, n_out); compare the last tenth of the series to the sum
    total = np.abs(terms.sum(axis=0)).max()
    if total == 0:
        return 0.0
    k = max(1, terms.shape[0] // 10)
    tail = np.abs(terms[-k:].sum(axis=0)).max() / total
    if tail > tol:
        warnings.warn(f"DN series tail {tail:.2e} exceeds {tol:.1e}", TruncationWarning, stacklevel=3)
    return float(tail)


def dn_apply(inp, bsd, alpha, s_out, T0=None, sign=DN_SIGN, n_modes=None, tail_tol=1e-2):
    """Flux at ``T0`` from the boundary spectral data.

    ``flux(x) = sign * sum_n c_n(T0) (int_{S_in} h psi_n) psi_n(x)`` with
    ``c_n(T0) = int_0^T0 s^(alpha-1) E_{alpha,alpha}(-lam_n s^alpha) g(T0 - s) ds``,
    evaluated in closed form for the polynomial bump.
    """
    T0 = inp.T0 if T0 is None else T0
    data = bsd if n_modes is None else bsd.truncated(n_modes)
    b = boundary_moments(data, inp)
    conv = bump_convolution_exact(alpha, data.eigenvalues, inp.g, np.array([T0]))[:, 0]
    terms = (conv * b)[:, None] * data.flux_on(s_out)
    tail = _check_tail(terms, tail_tol)
    flux = sign * terms.sum(axis=0)
    return DNMeasurement(inp, T0, flux, s_out, "spectral-formula", {"n_modes": data.n_modes, "tail": tail, "sign": sign})


def dn_oracle(inp, coeffs, alpha, s_out, n_steps, T0=None):
    """Flux of the time-stepping solution at ``T0`` (T is reset to T0)."""
    T0 = inp.T0 if T0 is None else T0
    run = BoundaryInput(inp.g, inp.h, inp.patch, T0, T0)
    tr = solve_oracle(run, coeffs, alpha, n_steps)
    flux = normal_derivative(tr.fields[-1], coeffs, s_out)
    return DNMeasurement(inp, T0, flux, s_out, "oracle", {"n_steps": n_steps})


def calibrate_sign(unsigned, oracle):
    """Sign making ``sign * unsigned`` agree with the oracle flux."""
    d = float(np.dot(np.asarray(unsigned), np.asarray(oracle)))
    if d == 0:
        raise ValueError("cannot calibrate the sign against a zero flux")
    return 1 if d > 0 else -1


def theta0_window(alpha):
    """Admissible ``theta0``: ``(pi alpha / 2, pi alpha)``, capped at pi so the sector is nonempty."""
    return 0.5 * np.pi * alpha, min(np.pi * alpha, np.pi)


def default_theta0(alpha):
    """Midpoint of :func:`theta0_window`."""
    lo, hi = theta0_window(alpha)
    return 0.5 * (lo + hi)


def default_z_grid(theta0, n=64, r_min=1e-2, r_max=1e3):
    """Log-spaced points on the positive axis and on the rays ``arg z = +-(pi - theta0)/2``."""
    r = np.geomspace(r_min, r_max, n)
    phi = 0.5 * (np.pi - theta0)
    return np.concatenate([r.astype(complex), r * np.exp(1j * phi), r * np.exp(-1j * phi)])


@dataclass
class SectorSample:
    """Values ``F_h(z, x)`` at sector points z (rows) and output nodes x (columns)."""

    z: np.ndarray
    values: np.ndarray
    h: np.ndarray
    theta0: float
    alpha: float
    meta: dict = field(default_factory=dict)

    def save(self, csv_path, json_path):
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            nx = self.values.shape[1]
            head = ["re_z", "im_z"]
            for k in range(nx):
                head += [f"re_F{k}", f"im_F{k}"]
            w.writerow(head)
            for zi, row in zip(self.z, self.values):
                vals = [zi.real, zi.imag]
                for v in row:
                    vals += [v.real, v.imag]
                w.writerow([f"{v:.17g}" for v in vals])
        meta = {
            "kind": "SectorSample",
            "csv": str(csv_path),
            "alpha": self.alpha,
            "theta0": self.theta0,
            "n_points": len(self.z),
            "h": [float(v) for v in self.h],
            **self.meta,
        }
        with open(json_path, "w") as fh:
            json.dump(meta, fh, indent=2)


def sector_eval(inp_or_h, bsd, alpha, s_out, z_points=None, theta0=None, s_in=None, n_modes=None):
    """``F_h(z, x) = sum_n E_{alpha,alpha}(-lam_n z) (int Theta_n(x, y) h(y) dy)``.

    ``inp_or_h`` is either a BoundaryInput or a nodal field supported on ``s_in``.
    """
    theta0 = default_theta0(alpha) if theta0 is None else theta0
    lo, hi = theta0_window(alpha)
    if not lo < theta0 < hi:
        raise ValueError(f"theta0 must lie in ({lo:.6g}, {hi:.6g})")
    z = default_z_grid(theta0) if z_points is None else np.atleast_1d(np.asarray(z_points, dtype=complex))
    if np.any(z == 0) or np.any(np.abs(np.angle(z)) >= np.pi - theta0):
        raise ValueError("sector points must satisfy 0 < |z| and |arg z| < pi - theta0")
    data = bsd if n_modes is None else bsd.truncated(n_modes)
    if isinstance(inp_or_h, BoundaryInput):
        b = boundary_moments(data, inp_or_h)
        h = inp_or_h.patch.take(inp_or_h.h)
    else:
        if s_in is None:
            raise ValueError("s_in is required with a bare space profile")
        hv = s_in.take(np.asarray(inp_or_h, dtype=float))
        b = data.flux_on(s_in) @ (s_in.weights() * hv)
        h = hv
    E = ml(alpha, alpha, -np.outer(z, data.eigenvalues))
    values = (E * b) @ data.flux_on(s_out)
    return SectorSample(z, values, np.asarray(h), theta0, alpha, {"n_modes": data.n_modes})
