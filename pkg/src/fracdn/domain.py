"""Tensor-product grids on intervals and rectangles, coefficient fields and boundary patches."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "CoefficientField",
    "BoundaryPatch",
    "ManifoldCoefficients",
    "EDGES",
    "inner_product_rho",
    "isotropic_to_manifold",
    "manifold_to_isotropic",
    "normal_derivative",
    "patch_relations",
    "coefficient_from_preset",
    "coefficients_from_config",
    "grid_from_config",
    "patch_from_config",
]

# edge name -> (normal axis, side); side 0 is the low end of the axis
EDGES = {
    "left": (0, 0),
    "right": (0, 1),
    "bottom": (1, 0),
    "top": (1, 1),
}


@dataclass(frozen=True)
class Grid:
    """Uniform tensor-product node grid on ``[0, L_1] x ... x [0, L_d]``."""

    extents: tuple
    n_cells: tuple

    def __post_init__(self):
        ext = tuple(float(e) for e in np.atleast_1d(self.extents))
        cells = tuple(int(n) for n in np.atleast_1d(self.n_cells))
        if len(ext) != len(cells) or len(ext) not in (1, 2):
            raise ValueError("grid must be 1D or 2D with matching extents and cell counts")
        if any(e <= 0 for e in ext):
            raise ValueError("extents must be positive")
        if any(n < 4 for n in cells):
            raise ValueError("need at least 4 cells per axis")
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "n_cells", cells)

    @property
    def dim(self):
        return len(self.extents)

    @property
    def h(self):
        return tuple(e / n for e, n in zip(self.extents, self.n_cells))

    @property
    def shape(self):
        return tuple(n + 1 for n in self.n_cells)

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    def axes(self):
        return [np.linspace(0.0, e, n + 1) for e, n in zip(self.extents, self.n_cells)]

    def coords(self):
        """Nodal coordinate arrays, one per axis, each of shape ``self.shape``."""
        return np.meshgrid(*self.axes(), indexing="ij")

    @property
    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        return mask

    @property
    def interior_mask(self):
        return ~self.boundary_mask

    @property
    def n_interior(self):
        return int(np.prod([n - 1 for n in self.n_cells]))

    def embed(self, interior):
        """Lift interior vectors (..., n_interior) to nodal fields with zero boundary."""
        interior = np.asarray(interior)
        out = np.zeros(interior.shape[:-1] + self.shape, dtype=interior.dtype)
        out[(Ellipsis,) + np.nonzero(self.interior_mask)] = interior
        return out

    def restrict(self, nodal):
        """Interior values of nodal fields, shape (..., n_interior)."""
        nodal = np.asarray(nodal)
        return nodal[(Ellipsis,) + np.nonzero(self.interior_mask)]

    def trapezoid_weights(self):
        w = None
        for hh, n in zip(self.h, self.n_cells):
            w1 = np.full(n + 1, hh)
            w1[[0, -1]] *= 0.5
            w = w1 if w is None else np.multiply.outer(w, w1)
        return w

    def to_dict(self):
        return {"extents": list(self.extents), "n_cells": list(self.n_cells)}


@dataclass(frozen=True)
class CoefficientField:
    """Nodal density ``rho``, conductivity ``a`` and potential ``V``."""

    rho: np.ndarray
    a: np.ndarray
    V: np.ndarray
    c: float = field(init=False)

    def __post_init__(self):
        rho, a, V = (np.array(x, dtype=float) for x in (self.rho, self.a, self.V))
        if not (rho.shape == a.shape == V.shape):
            raise ValueError("rho, a and V must share a shape")
        c = float(min(rho.min(), a.min()))
        if c <= 0:
            raise ValueError("rho and a must be bounded below by a positive constant")
        if V.min() < 0:
            raise ValueError("V must be nonnegative")
        for x in (rho, a, V):
            x.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "c", c)

    @classmethod
    def constant(cls, grid, rho=1.0, a=1.0, V=0.0):
        ones = np.ones(grid.shape)
        return cls(rho * ones, a * ones, V * ones)

    def shifted(self, dV):
        return CoefficientField(self.rho, self.a, self.V + dV)


@dataclass(frozen=True)
class ManifoldCoefficients:
    """Conformally flat metric ``g = g_diag * I``, weight ``mu`` and potential ``q``."""

    g_diag: np.ndarray
    mu: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.g_diag) <= 0) or np.any(np.asarray(self.mu) <= 0):
            raise ValueError("g_diag and mu must be positive")
        if np.any(np.asarray(self.q) < 0):
            raise ValueError("q must be nonnegative")


@dataclass(frozen=True)
class BoundaryPatch:
    """Set of boundary nodes given as contiguous index ranges along grid edges.

    ``segments`` is a sequence of ``(edge, start, stop)`` with ``stop``
    exclusive; the tangential index is ignored in 1D.
    """

    grid: Grid
    segments: tuple
    label: str = "other"

    def __post_init__(self):
        segs = []
        for seg in self.segments:
            edge, start, stop = (seg + (None, None))[:3] if isinstance(seg, tuple) else (seg, None, None)
            if edge not in EDGES:
                raise ValueError(f"unknown edge {edge!r}")
            ax, _ = EDGES[edge]
            if ax >= self.grid.dim:
                raise ValueError(f"edge {edge!r} does not exist on a {self.grid.dim}D grid")
            if self.grid.dim == 1:
                start, stop = 0, 1
            else:
                tang = 1 - ax
                n = self.grid.shape[tang]
                start = 0 if start is None else int(start)
                stop = n if stop is None else int(stop)
                if not 0 <= start < stop <= n:
                    raise ValueError(f"bad range [{start}, {stop}) on edge {edge!r}")
            segs.append((edge, start, stop))
        if not segs:
            raise ValueError("patch must be nonempty")
        object.__setattr__(self, "segments", tuple(segs))

    def nodes(self):
        """List of (node multi-index, normal axis, side)."""
        out = []
        for edge, start, stop in self.segments:
            ax, side = EDGES[edge]
            for k in range(start, stop):
                idx = [0] * self.grid.dim
                idx[ax] = 0 if side == 0 else self.grid.shape[ax] - 1
                if self.grid.dim == 2:
                    idx[1 - ax] = k
                out.append((tuple(idx), ax, side))
        return out

    @property
    def node_indices(self):
        return [n[0] for n in self.nodes()]

    def __len__(self):
        return sum(stop - start for _, start, stop in self.segments)

    def weights(self):
        """Surface quadrature weights: trapezoid along each 2D segment, 1 in 1D."""
        if self.grid.dim == 1:
            return np.ones(len(self))
        w = []
        for edge, start, stop in self.segments:
            ax, _ = EDGES[edge]
            hh = self.grid.h[1 - ax]
            ws = np.full(stop - start, hh)
            if stop - start > 1:
                ws[[0, -1]] *= 0.5
            w.append(ws)
        return np.concatenate(w)

    def take(self, nodal):
        """Values of nodal fields (..., *grid.shape) at the patch nodes."""
        nodal = np.asarray(nodal)
        idx = tuple(np.array(i) for i in zip(*self.node_indices))
        return nodal[(Ellipsis,) + idx]

    def scatter(self, values):
        """Nodal field equal to ``values`` on the patch and zero elsewhere."""
        out = np.zeros(self.grid.shape)
        idx = tuple(np.array(i) for i in zip(*self.node_indices))
        out[idx] = values
        return out

    def to_dict(self):
        return {"label": self.label, "segments": [list(s) for s in self.segments]}


def patch_relations(s_in, s_out):
    """Whether the patches intersect and whether together they cover the boundary."""
    a, b = set(s_in.node_indices), set(s_out.node_indices)
    grid = s_in.grid
    boundary = {tuple(int(i) for i in ix) for ix in zip(*np.nonzero(grid.boundary_mask))}
    return {"intersect": bool(a & b), "cover": (a | b) >= boundary}


def inner_product_rho(u, v, coeffs, grid):
    """Trapezoidal approximation of the weighted product ``int rho u v dx``."""
    u, v = np.asarray(u), np.asarray(v)
    if u.shape[-grid.dim:] != grid.shape or v.shape[-grid.dim:] != grid.shape:
        raise ValueError("fields do not conform to the grid")
    w = grid.trapezoid_weights() * coeffs.rho
    axes = tuple(range(-grid.dim, 0))
    return np.sum(w * u * v, axis=axes)


def isotropic_to_manifold(coeffs, dim):
    """Metric, weight and potential representing ``rho^-1 (-div a grad + V)``."""
    rho, a, V = coeffs.rho, coeffs.a, coeffs.V
    return ManifoldCoefficients(
        g_diag=rho / a,
        # |a| read as det(a I_d) = a^d, so that mu |g|^(1/2) = rho
        mu=rho ** (1 - dim / 2) * a ** (dim / 2),
        q=V / rho,
    )


def manifold_to_isotropic(mc, dim):
    """Inverse of :func:`isotropic_to_manifold`: ``rho = mu |g|^1/2``, ``a = rho / g``."""
    rho = mc.mu * mc.g_diag ** (dim / 2)
    a = rho / mc.g_diag
    return CoefficientField(rho, a, rho * mc.q)


def normal_derivative(nodal, coeffs, patch):
    """Conormal derivative ``a du/dnu`` at the patch nodes.

    One-sided second-order differences along the outward normal; ``nodal`` may
    carry leading batch axes.
    """
    grid = patch.grid
    nodal = np.asarray(nodal)
    if nodal.shape[-grid.dim:] != grid.shape:
        raise ValueError("field does not conform to the grid")
    out = []
    for idx, ax, side in patch.nodes():
        if grid.n_cells[ax] < 4:
            raise ValueError("grid too coarse along the normal")
        h = grid.h[ax]
        step = 1 if side == 0 else -1

        def at(k):
            j = list(idx)
            j[ax] = idx[ax] + step * k
            return nodal[(Ellipsis,) + tuple(j)]

        # outward derivative: -d/dx on the low side, +d/dx on the high side
        d = (3 * at(0) - 4 * at(1) + at(2)) / (2 * h)
        out.append(coeffs.a[idx] * d)
    return np.stack(out, axis=-1)


# ---------------------------------------------------------------------------
# JSON configuration


def grid_from_config(cfg):
    return Grid(tuple(cfg["extents"]), tuple(cfg["n_cells"]))


def coefficient_from_preset(spec, grid):
    """Nodal values for a named preset: constant, affine or gaussian-bump."""
    if isinstance(spec, (int, float)):
        return np.full(grid.shape, float(spec))
    kind = spec.get("type", "constant")
    xs = grid.coords()
    if kind == "constant":
        return np.full(grid.shape, float(spec["value"]))
    if kind == "affine":
        grad = list(spec.get("grad", [0.0] * grid.dim))
        out = np.full(grid.shape, float(spec.get("c0", 0.0)))
        for g, x in zip(grad, xs):
            out = out + g * x
        return out
    if kind == "gaussian-bump":
        center = spec.get("center", [e / 2 for e in grid.extents])
        r2 = sum((x - c) ** 2 for x, c in zip(xs, center))
        return spec.get("base", 0.0) + spec["amplitude"] * np.exp(-r2 / (2 * spec["width"] ** 2))
    raise ValueError(f"unknown coefficient preset {kind!r}")


def coefficients_from_config(cfg, grid):
    vals = {k: coefficient_from_preset(cfg.get(k, 1.0 if k != "V" else 0.0), grid) for k in ("rho", "a", "V")}
    return CoefficientField(vals["rho"], vals["a"], vals["V"])


def patch_from_config(cfg, grid):
    segs = []
    for s in cfg["segments"]:
        segs.append(tuple(s) if isinstance(s, (list, tuple)) else (s,))
    return BoundaryPatch(grid, tuple(segs), cfg.get("label", "other"))
