"""Discrete Dirichlet operator ``rho^-1 (-div a grad + V)`` and its boundary spectral data."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import zeta

from .domain import BoundaryPatch, CoefficientField, Grid, inner_product_rho, normal_derivative

__all__ = [
    "EllipticOperator",
    "EigenSystem",
    "BoundarySpectralData",
    "EigenSolveError",
    "SpectralTailWarning",
    "CLUSTER_RTOL",
    "assemble",
    "eigensolve",
    "boundary_flux",
    "green_flux",
    "full_boundary_patch",
    "h_power_apply",
    "elliptic_lift",
    "ell1c_ratio",
    "weighted_laplacian",
    "cluster_eigenvalues",
    "lift_coefficient_identity",
    "analytic_interval_bsd",
    "boundary_sobolev_norm",
]

CLUSTER_RTOL = 1e-8
DENSE_LIMIT = 4096


class EigenSolveError(RuntimeError):
    pass


class SpectralTailWarning(UserWarning):
    pass


def _stiffness(grid, a, V=None):
    """Nodal stiffness over all nodes: midpoint-averaged conductances, V lumped."""
    n = int(np.prod(grid.shape))
    index = np.arange(n).reshape(grid.shape)
    rows, cols, vals = [], [], []
    vol = grid.cell_volume
    for ax in range(grid.dim):
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        i = index[tuple(lo)].ravel()
        j = index[tuple(hi)].ravel()
        c = 0.5 * (a[tuple(lo)] + a[tuple(hi)]).ravel() * vol / grid.h[ax] ** 2
        rows += [i, j, i, j]
        cols += [i, j, j, i]
        vals += [c, c, -c, -c]
    if V is not None:
        d = (V * grid.trapezoid_weights()).ravel()
        rows.append(np.arange(n))
        cols.append(np.arange(n))
        vals.append(d)
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return K.tocsr()


@dataclass(frozen=True)
class EllipticOperator:
    """Stiffness (with potential) over all nodes plus the interior rho-mass diagonal."""

    grid: Grid
    coeffs: CoefficientField
    K: sp.csr_matrix
    interior: np.ndarray
    boundary: np.ndarray

    @property
    def K_II(self):
        return self.K[self.interior][:, self.interior]

    @property
    def K_IB(self):
        return self.K[self.interior][:, self.boundary]

    @property
    def mass(self):
        return self.coeffs.rho.ravel()[self.interior] * self.grid.cell_volume

    def form(self, u):
        """Quadratic form ``int a |grad u|^2 + V u^2`` of a nodal field."""
        u = np.asarray(u, dtype=float).ravel()
        return float(u @ (self.K @ u))

    def apply(self, u_interior):
        """``rho^-1 (-div a grad + V)`` on an interior vector with zero boundary data."""
        return (self.K_II @ u_interior) / self.mass


def assemble(coeffs, grid):
    """Assemble the symmetric finite-difference pencil for the Dirichlet operator."""
    if coeffs.rho.shape != grid.shape:
        raise ValueError("coefficients do not conform to the grid")
    K = _stiffness(grid, coeffs.a, coeffs.V)
    flat_b = grid.boundary_mask.ravel()
    return EllipticOperator(
        grid, coeffs, K, np.nonzero(~flat_b)[0], np.nonzero(flat_b)[0]
    )


def cluster_eigenvalues(lam, rtol=CLUSTER_RTOL):
    """Group ascending eigenvalues equal within ``rtol`` (relative)."""
    groups = [[0]] if len(lam) else []
    for i in range(1, len(lam)):
        if abs(lam[i] - lam[groups[-1][0]]) <= rtol * abs(lam[i]):
            groups[-1].append(i)
        else:
            groups.append([i])
    return [np.array(g) for g in groups]


@dataclass(frozen=True)
class EigenSystem:
    """Ascending eigenvalues and rho-orthonormal interior eigenvectors (rows)."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    grid: Grid
    coeffs: CoefficientField
    residuals: np.ndarray = field(default=None)

    @property
    def n_modes(self):
        return len(self.eigenvalues)

    def nodal(self):
        return self.grid.embed(self.vectors)

    def clusters(self, rtol=CLUSTER_RTOL):
        return cluster_eigenvalues(self.eigenvalues, rtol)

    def coefficients(self, nodal):
        """Rho-weighted Fourier coefficients of nodal fields (..., *grid.shape)."""
        return _coefficients(self, nodal)

    def to_dict(self, include_vectors=True):
        d = {
            "kind": "EigenSystem",
            "grid": self.grid.to_dict(),
            "eigenvalues": self.eigenvalues.tolist(),
            "coefficients": {k: getattr(self.coeffs, k).tolist() for k in ("rho", "a", "V")},
        }
        if include_vectors:
            d["vectors"] = self.vectors.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        grid = Grid(tuple(d["grid"]["extents"]), tuple(d["grid"]["n_cells"]))
        c = d["coefficients"]
        coeffs = CoefficientField(np.array(c["rho"]), np.array(c["a"]), np.array(c["V"]))
        return cls(np.array(d["eigenvalues"]), np.array(d["vectors"]), grid, coeffs)


def _coefficients(es, nodal):
    nodal = np.asarray(nodal, dtype=float)
    w = (es.grid.trapezoid_weights() * es.coeffs.rho).ravel()
    flat = nodal.reshape(nodal.shape[: nodal.ndim - es.grid.dim] + (-1,))
    modes = es.nodal().reshape(es.n_modes, -1)
    return (flat * w) @ modes.T


def eigensolve(op, n_modes, method="auto", check=True):
    """Lowest ``n_modes`` eigenpairs of ``K phi = lambda R phi``.

    1D problems use a tridiagonal solver, small 2D problems a dense symmetric
    one, and larger ones shift-invert Lanczos targeting the bottom of the
    spectrum.
    """
    n = len(op.interior)
    if not 1 <= n_modes <= n:
        raise ValueError(f"n_modes must lie in [1, {n}]")
    m = op.mass
    s = 1.0 / np.sqrt(m)
    A = sp.diags(s) @ op.K_II @ sp.diags(s)
    if method == "auto":
        if op.grid.dim == 1:
            method = "tridiagonal"
        elif n <= DENSE_LIMIT:
            method = "dense"
        else:
            method = "sparse"
    if method == "tridiagonal":
        if op.grid.dim != 1:
            raise ValueError("tridiagonal solver needs a 1D grid")
        d = A.diagonal()
        e = A.diagonal(1)
        lam, y = sla.eigh_tridiagonal(d, e, select="i", select_range=(0, n_modes - 1))
    elif method == "dense":
        lam, y = sla.eigh(A.toarray(), subset_by_index=(0, n_modes - 1))
    elif method == "sparse":
        lam, y = spla.eigsh(A.tocsc(), k=n_modes, sigma=0, which="LM")
        order = np.argsort(lam)
        lam, y = lam[order], y[:, order]
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    phi = (y * s[:, None]).T
    # deterministic signs: largest-magnitude entry positive
    piv = np.argmax(np.abs(phi), axis=1)
    phi *= np.sign(phi[np.arange(n_modes), piv])[:, None]
    r = (op.K_II @ phi.T).T / m - lam[:, None] * phi
    res = np.sqrt((r**2 * m).sum(axis=1)) / np.abs(lam)
    # floating-point floor: roundoff in H phi scales like eps * ||H||
    hnorm = np.max(np.abs(A).sum(axis=1))
    floor = np.maximum(1e-9, 64 * np.finfo(float).eps * hnorm / np.abs(lam))
    if check and np.any(res > floor):
        raise EigenSolveError(f"eigensolver residuals too large: max {np.max(res):.3e}")
    return EigenSystem(lam, phi, op.grid, op.coeffs, res)


def full_boundary_patch(grid, label="boundary"):
    """Patch covering every boundary node once (corners belong to the x-edges)."""
    if grid.dim == 1:
        return BoundaryPatch(grid, (("left",), ("right",)), label)
    ny = grid.shape[1]
    nx = grid.shape[0]
    segs = (("left", 0, ny), ("bottom", 1, nx - 1), ("right", 0, ny), ("top", 1, nx - 1))
    return BoundaryPatch(grid, segs, label)


@dataclass(frozen=True)
class BoundarySpectralData:
    """Eigenvalues with the conormal fluxes of their eigenfunctions on a patch.

    ``fluxes[n, k]`` is ``a d_nu phi_n`` at the k-th patch node.
    """

    eigenvalues: np.ndarray
    fluxes: np.ndarray
    patch: BoundaryPatch
    clusters: list
    alpha: float | None = None

    @property
    def n_modes(self):
        return len(self.eigenvalues)

    @property
    def cluster_values(self):
        return np.array([self.eigenvalues[g].mean() for g in self.clusters])

    def columns(self, sub):
        """Column indices of the nodes of patch ``sub`` within this data's patch."""
        lookup = {}
        for k, (idx, ax, side) in enumerate(self.patch.nodes()):
            lookup.setdefault(idx, k)
        try:
            return np.array([lookup[idx] for idx in sub.node_indices])
        except KeyError as exc:
            raise ValueError(f"node {exc.args[0]} is not on the data patch") from None

    def flux_on(self, sub):
        return self.fluxes[:, self.columns(sub)]

    def theta(self, n, rows=None, cols=None):
        """Kernel ``sum_p psi_{n,p}(x) psi_{n,p}(y)`` of the n-th eigenvalue cluster."""
        g = self.clusters[n]
        fr = self.fluxes[g] if rows is None else self.flux_on(rows)[g]
        fc = self.fluxes[g] if cols is None else self.flux_on(cols)[g]
        return fr.T @ fc

    def truncated(self, n_modes):
        lam = self.eigenvalues[:n_modes]
        return BoundarySpectralData(
            lam, self.fluxes[:n_modes], self.patch, cluster_eigenvalues(lam), self.alpha
        )

    def to_dict(self):
        return {
            "kind": "BoundarySpectralData",
            "grid": self.patch.grid.to_dict(),
            "patch": self.patch.to_dict(),
            "eigenvalues": self.eigenvalues.tolist(),
            "fluxes": self.fluxes.tolist(),
            "clusters": [g.tolist() for g in self.clusters],
        }

    @classmethod
    def from_dict(cls, d):
        grid = Grid(tuple(d["grid"]["extents"]), tuple(d["grid"]["n_cells"]))
        patch = BoundaryPatch(grid, tuple(tuple(s) for s in d["patch"]["segments"]), d["patch"]["label"])
        return cls(
            np.array(d["eigenvalues"]),
            np.array(d["fluxes"]),
            patch,
            [np.array(g) for g in d["clusters"]],
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def green_flux(nodal, coeffs, patch):
    """Conormal derivative read off the stencil rows at the patch nodes.

    For fields vanishing on the boundary the discrete Green identity gives
    ``a d_nu u = (K u)_b / s_b`` with ``s_b`` the boundary face length (1 in
    1D). This is the flux paired exactly with the assembled operator; for
    eigenfunctions it is second-order accurate since ``div(a grad phi) = 0``
    on the boundary.
    """
    grid = patch.grid
    K = _stiffness(grid, coeffs.a)
    nodal = np.asarray(nodal, dtype=float)
    flat = nodal.reshape(nodal.shape[: nodal.ndim - grid.dim] + (-1,))
    rows = np.ravel_multi_index(tuple(np.array(patch.node_indices).T), grid.shape)
    face = np.array([1.0 if grid.dim == 1 else grid.h[1 - ax] for _, ax, _ in patch.nodes()])
    return (K[rows] @ flat.T).T / face


def boundary_flux(es, coeffs=None, patch=None, rtol=CLUSTER_RTOL, method="green"):
    """Boundary spectral data of an eigensystem on ``patch`` (default: whole boundary).

    ``method="green"`` uses :func:`green_flux`; ``"stencil"`` uses one-sided
    second-order differences, independent of the assembled operator.
    """
    coeffs = es.coeffs if coeffs is None else coeffs
    patch = full_boundary_patch(es.grid) if patch is None else patch
    if method == "green":
        psi = green_flux(es.nodal(), coeffs, patch)
    elif method == "stencil":
        psi = normal_derivative(es.nodal(), coeffs, patch)
    else:
        raise ValueError(f"unknown flux method {method!r}")
    return BoundarySpectralData(es.eigenvalues.copy(), psi, patch, es.clusters(rtol))


def h_power_apply(h, es, s):
    """``H^s h`` over the computed modes; warns when h is not resolved by them."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    h = np.asarray(h, dtype=float)
    c = _coefficients(es, h)
    proj = c @ es.nodal().reshape(es.n_modes, -1)
    resid = h.ravel() - proj
    tail = float(inner_product_rho(resid.reshape(h.shape), resid.reshape(h.shape), es.coeffs, es.grid))
    if tail > 1e-6:
        warnings.warn(f"spectral tail mass {tail:.3e} not captured by the modes", SpectralTailWarning, stacklevel=2)
    out = (c * es.eigenvalues**s) @ es.nodal().reshape(es.n_modes, -1)
    return out.reshape(h.shape)


def elliptic_lift(g_b, coeffs, grid):
    """Solve ``-div(a grad v) + V v = 0`` with ``v = g_b`` on the boundary.

    ``g_b`` is a nodal field whose boundary values are used.
    """
    op = assemble(coeffs, grid)
    g = np.asarray(g_b, dtype=float).ravel()
    rhs = -(op.K_IB @ g[op.boundary])
    v = g.copy()
    v[op.interior] = spla.spsolve(op.K_II.tocsc(), rhs)
    if not np.all(np.isfinite(v)):
        raise np.linalg.LinAlgError("elliptic lift solve failed")
    return v.reshape(grid.shape)


def weighted_laplacian(coeffs, grid, w):
    """Discrete ``rho^-1 div(a grad w)`` at interior nodes (boundary entries are NaN)."""
    K = _stiffness(grid, coeffs.a)
    out = -(K @ np.asarray(w, dtype=float).ravel()) / (coeffs.rho.ravel() * grid.cell_volume)
    out = out.reshape(grid.shape)
    out[grid.boundary_mask] = np.nan
    return out


def _boundary_loop(grid):
    """Boundary node multi-indices ordered counterclockwise (2D)."""
    nx, ny = grid.shape
    loop = [(i, 0) for i in range(nx)]
    loop += [(nx - 1, j) for j in range(1, ny)]
    loop += [(i, ny - 1) for i in range(nx - 2, -1, -1)]
    loop += [(0, j) for j in range(ny - 2, 0, -1)]
    return loop


def boundary_sobolev_norm(g_b, grid, order=1.5):
    """Discrete surrogate for the H^order norm of boundary data.

    1D: Euclidean norm of the two endpoint values. 2D: spectral norm on the
    boundary loop, ``sum_k (1 + omega_k^2)^order |g_k|^2`` with Fourier
    coefficients scaled to approximate the L2 norm.
    """
    g = np.asarray(g_b, dtype=float)
    if grid.dim == 1:
        return float(np.hypot(g[0], g[-1]))
    loop = _boundary_loop(grid)
    vals = np.array([g[ix] for ix in loop])
    perim = 2 * sum(grid.extents)
    n = len(vals)
    ghat = np.fft.fft(vals) / n
    omega = 2 * np.pi * np.fft.fftfreq(n, d=perim / n)
    return float(np.sqrt(perim * np.sum((1 + omega**2) ** order * np.abs(ghat) ** 2)))


def ell1c_ratio(bsd, g_b, tail_correction=True):
    """``sum_n lambda_n^-2 |int g psi_n|^2`` over the boundary, divided by ``||g||^2``.

    ``bsd`` must carry fluxes on the whole boundary. With ``tail_correction``
    the unresolved tail is estimated by fitting a power law ``C k^-p`` to the
    last quarter of the sums of consecutive term pairs and adding
    ``C * zeta(p, K + 1)`` over the K pairs.
    """
    grid = bsd.patch.grid
    g = np.asarray(g_b, dtype=float)
    gvals = bsd.patch.take(g)
    b = bsd.fluxes @ (bsd.patch.weights() * gvals)
    terms = b**2 / bsd.eigenvalues**2
    total = float(terms.sum())
    M = len(terms)
    if tail_correction and M >= 16:
        # pair consecutive terms so sign patterns (-1)^n in the fluxes average out
        P = terms[M % 2 :].reshape(-1, 2).sum(axis=1)
        K = len(P)
        k = np.arange(1, K + 1)
        sel = slice(3 * K // 4, K)
        pos = P[sel] > 0
        if pos.sum() >= 2:
            slope, icpt = np.polyfit(np.log(k[sel][pos]), np.log(P[sel][pos]), 1)
            p = -slope
            if p > 1:
                total += float(np.exp(icpt) * zeta(p, K + 1))
    norm = boundary_sobolev_norm(g, grid)
    if norm == 0:
        return 0.0
    return total / norm**2


def lift_coefficient_identity(es, bsd, g_b):
    """Both sides of ``<v, phi_n>_rho = -lambda_n^-1 int g psi_n`` for the lift v of g_b.

    The left side comes from a linear solve and quadrature, the right side from
    boundary fluxes only; ``bsd`` must cover the support of ``g_b``.
    """
    v = elliptic_lift(g_b, es.coeffs, es.grid)
    lhs = es.coefficients(v)
    gv = bsd.patch.take(np.asarray(g_b, dtype=float))
    rhs = -(bsd.fluxes @ (bsd.patch.weights() * gv)) / bsd.eigenvalues
    return lhs, rhs


def analytic_interval_bsd(n_modes, grid, V=0.0, patch=None):
    """Exact data of ``-u''`` on (0, L) with Dirichlet ends, shifted by a constant V.

    ``lambda_n = (n pi / L)^2 + V``, ``phi_n = sqrt(2/L) sin(n pi x / L)`` and the
    outward fluxes are ``-sqrt(2/L) n pi / L`` at 0, ``(-1)^n`` times that
    magnitude at L.
    """
    if grid.dim != 1:
        raise ValueError("analytic data is for the interval only")
    L = grid.extents[0]
    patch = full_boundary_patch(grid) if patch is None else patch
    n = np.arange(1, n_modes + 1)
    lam = (n * np.pi / L) ** 2 + V
    mag = np.sqrt(2.0 / L) * n * np.pi / L
    cols = []
    for idx, ax, side in patch.nodes():
        cols.append(-mag if side == 0 else mag * (-1.0) ** n)
    psi = np.stack(cols, axis=1)
    return BoundarySpectralData(lam, psi, patch, cluster_eigenvalues(lam))
