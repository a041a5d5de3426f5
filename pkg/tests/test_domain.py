import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracdn.domain import (
    BoundaryPatch,
    CoefficientField,
    Grid,
    ManifoldCoefficients,
    coefficients_from_config,
    grid_from_config,
    inner_product_rho,
    isotropic_to_manifold,
    manifold_to_isotropic,
    normal_derivative,
    patch_from_config,
    patch_relations,
)


def test_grid_basics():
    g = Grid((1.0, 2.0), (10, 20))
    assert g.shape == (11, 21)
    assert g.h == (0.1, 0.1)
    assert g.n_interior == 9 * 19
    assert g.boundary_mask.sum() == 11 * 21 - 9 * 19
    assert g.trapezoid_weights().sum() == pytest.approx(2.0)


@pytest.mark.parametrize("ext,cells", [((1.0,), (3,)), ((0.0,), (10,)), ((1.0, 1.0, 1.0), (5, 5, 5))])
def test_grid_rejects_bad_shapes(ext, cells):
    with pytest.raises(ValueError):
        Grid(ext, cells)


def test_embed_restrict_round_trip():
    g = Grid((1.0, 1.0), (6, 5))
    v = np.arange(g.n_interior, dtype=float)
    assert np.array_equal(g.restrict(g.embed(v)), v)
    assert np.all(g.embed(v)[g.boundary_mask] == 0)


def test_coefficients_validate():
    g = Grid((1.0,), (8,))
    with pytest.raises(ValueError):
        CoefficientField.constant(g, rho=0.0)
    with pytest.raises(ValueError):
        CoefficientField.constant(g, V=-1.0)
    with pytest.raises(ValueError):
        CoefficientField(np.ones(9), np.ones(8), np.zeros(9))
    c = CoefficientField.constant(g, rho=2.0, a=0.5)
    assert c.c == 0.5
    assert np.all(c.shifted(3.0).V == 3.0)


def test_inner_product_examples():
    g = Grid((1.0,), (400,))
    x = g.axes()[0]
    one = CoefficientField.constant(g)
    assert inner_product_rho(np.sin(np.pi * x), np.sin(2 * np.pi * x), one, g) == pytest.approx(0.0, abs=1e-12)
    assert inner_product_rho(np.ones_like(x), np.ones_like(x), one, g) == pytest.approx(1.0, abs=1e-14)
    three = CoefficientField.constant(g, rho=3.0)
    assert inner_product_rho(x, np.ones_like(x), three, g) == pytest.approx(1.5, abs=1e-12)


def test_inner_product_shape_mismatch():
    g = Grid((1.0,), (8,))
    with pytest.raises(ValueError):
        inner_product_rho(np.ones(5), np.ones(9), CoefficientField.constant(g), g)


def test_manifold_map_example_2d():
    g = Grid((1.0, 1.0), (4, 4))
    c = CoefficientField.constant(g, rho=2.0, a=8.0, V=4.0)
    mc = isotropic_to_manifold(c, 2)
    assert np.allclose(mc.g_diag, 0.25)
    assert np.allclose(mc.q, 2.0)
    # mu is fixed by mu |g|^(1/2) = rho with |g| = det(g I_2)
    assert np.allclose(mc.mu * mc.g_diag ** (2 / 2), 2.0)
    assert np.allclose(mc.mu, 8.0)


def test_manifold_map_1d_uses_square_root():
    g = Grid((1.0,), (4,))
    mc = isotropic_to_manifold(CoefficientField.constant(g, rho=2.0, a=8.0, V=4.0), 1)
    assert np.allclose(mc.mu, 2.0**0.5 * 8.0**0.5)


@settings(max_examples=30, deadline=None)
@given(
    rho=st.floats(0.1, 10), a=st.floats(0.1, 10), V=st.floats(0, 10), dim=st.sampled_from([1, 2])
)
def test_manifold_round_trip(rho, a, V, dim):
    g = Grid((1.0,) * dim, (4,) * dim)
    c = CoefficientField.constant(g, rho, a, V)
    back = manifold_to_isotropic(isotropic_to_manifold(c, dim), dim)
    for x, y in ((back.rho, c.rho), (back.a, c.a), (back.V, c.V)):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-12)


def test_manifold_rejects_nonpositive():
    with pytest.raises(ValueError):
        ManifoldCoefficients(np.array([1.0]), np.array([0.0]), np.array([0.0]))


def test_normal_derivative_examples():
    g = Grid((1.0,), (200,))
    x = g.axes()[0]
    one = CoefficientField.constant(g)
    right = BoundaryPatch(g, (("right",),))
    left = BoundaryPatch(g, (("left",),))
    assert normal_derivative(x, one, right)[0] == pytest.approx(1.0, abs=1e-12)
    assert normal_derivative(x, one, left)[0] == pytest.approx(-1.0, abs=1e-12)
    assert normal_derivative(np.sin(np.pi * x), one, left)[0] == pytest.approx(-np.pi, abs=1e-3)


def test_normal_derivative_second_order():
    errs = []
    for n in (50, 100):
        g = Grid((1.0,), (n,))
        x = g.axes()[0]
        d = normal_derivative(np.sin(np.pi * x), CoefficientField.constant(g), BoundaryPatch(g, (("left",),)))
        errs.append(abs(d[0] + np.pi))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_normal_derivative_2d_edges():
    g = Grid((1.0, 1.0), (20, 20))
    X, Y = g.coords()
    one = CoefficientField.constant(g, a=2.0)
    u = X + 3 * Y
    assert np.allclose(normal_derivative(u, one, BoundaryPatch(g, (("top",),))), 6.0)
    assert np.allclose(normal_derivative(u, one, BoundaryPatch(g, (("left",),))), -2.0)


@settings(max_examples=20, deadline=None)
@given(c1=st.floats(-5, 5), c2=st.floats(-5, 5))
def test_normal_derivative_linear(c1, c2):
    g = Grid((1.0,), (16,))
    x = g.axes()[0]
    coeffs = CoefficientField(1 + x, 1 + x**2, np.zeros_like(x))
    p = BoundaryPatch(g, (("left",), ("right",)))
    u, v = np.sin(x), np.exp(x)
    lhs = normal_derivative(c1 * u + c2 * v, coeffs, p)
    rhs = c1 * normal_derivative(u, coeffs, p) + c2 * normal_derivative(v, coeffs, p)
    assert np.allclose(lhs, rhs, atol=1e-11)


def test_normal_derivative_shape_check():
    g = Grid((1.0,), (8,))
    with pytest.raises(ValueError):
        normal_derivative(np.zeros(7), CoefficientField.constant(g), BoundaryPatch(g, (("left",),)))


def test_patches():
    g = Grid((1.0, 1.0), (8, 8))
    p = BoundaryPatch(g, (("bottom", 2, 5),))
    assert len(p) == 3 and len(p.node_indices) == 3
    assert p.node_indices[0] == (2, 0)
    assert p.weights().sum() == pytest.approx(2 * 0.125)
    with pytest.raises(ValueError):
        BoundaryPatch(g, (("bottom", 5, 2),))
    with pytest.raises(ValueError):
        BoundaryPatch(g, (("diagonal",),))
    with pytest.raises(ValueError):
        BoundaryPatch(Grid((1.0,), (8,)), (("top",),))
    vals = np.arange(3.0)
    assert np.array_equal(p.take(p.scatter(vals)), vals)


def test_patch_relations():
    g = Grid((1.0,), (8,))
    left = BoundaryPatch(g, (("left",),))
    right = BoundaryPatch(g, (("right",),))
    assert patch_relations(left, right) == {"intersect": False, "cover": True}
    assert patch_relations(left, left) == {"intersect": True, "cover": False}
    g2 = Grid((1.0, 1.0), (8, 8))
    a = BoundaryPatch(g2, (("left",), ("bottom",)))
    b = BoundaryPatch(g2, (("right",), ("top",)))
    assert patch_relations(a, b) == {"intersect": True, "cover": True}


def test_config_helpers():
    g = grid_from_config({"extents": [1.0, 1.0], "n_cells": [8, 8]})
    c = coefficients_from_config(
        {"rho": {"type": "affine", "c0": 1.0, "grad": [0.5, 0.0]},
         "a": {"type": "gaussian-bump", "base": 1.0, "amplitude": 0.5, "width": 0.1},
         "V": 2.0},
        g,
    )
    assert c.rho[-1, 0] == pytest.approx(1.5)
    assert c.a[4, 4] == pytest.approx(1.5)
    assert np.all(c.V == 2.0)
    p = patch_from_config({"segments": [["left", 1, 4], "top"], "label": "in"}, g)
    assert len(p) == 3 + 9 and p.label == "in"
    with pytest.raises(ValueError):
        coefficients_from_config({"rho": {"type": "spline"}}, g)
