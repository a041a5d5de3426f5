"""Acceptance criteria as runnable checks.

Each ``criterion_N`` returns a :class:`CriterionResult` with the measured
metrics, the tolerance applied and the wall time. ``run_criteria`` runs a
selection and keeps going when one fails.
"""

from __future__ import annotations

import time
import traceback
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import dnmap
from .domain import BoundaryPatch, CoefficientField, Grid, isotropic_to_manifold
from .forward import BoundaryInput, PolyBump, relative_error_rho, solve_oracle, solve_spectral
from .inverse import (
    GaugePair,
    gauge_invariance_check,
    gauge_transform,
    hassell_tao_ratio,
    hyperbolic_dn,
    series_model,
    smooth_bump,
    strip_poles,
)
from .mlf import check_bound_es0, ml
from .spectral import (
    analytic_interval_bsd,
    assemble,
    boundary_flux,
    eigensolve,
    ell1c_ratio,
    full_boundary_patch,
    lift_coefficient_identity,
)

__all__ = ["CriterionResult", "CRITERIA", "run_criteria"]


@dataclass
class CriterionResult:
    id: int
    title: str
    passed: bool
    metrics: dict
    tolerance: str
    runtime: float = 0.0
    budget: float = 0.0
    error: str | None = None

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in self.metrics.items())
        extra = f" error={self.error}" if self.error else ""
        return f"[{status}] criterion {self.id}: {self.title} | {shown} | tol {self.tolerance} | {self.runtime:.1f}s{extra}"

    def to_dict(self):
        return {
            "id": self.id,
            "title": self.title,
            "passed": self.passed,
            "metrics": {k: _plain(v) for k, v in self.metrics.items()},
            "tolerance": self.tolerance,
            "runtime_s": self.runtime,
            "budget_s": self.budget,
            "error": self.error,
        }


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return f"{v:.3e}"
    return str(v)


def _plain(v):
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


# ---------------------------------------------------------------------------


def criterion_1():
    x = np.linspace(-20, 5, 200)
    e11 = np.max(np.abs(ml(1.0, 1.0, x) - np.exp(x)))
    t = np.linspace(0, 100, 201)
    e21 = np.max(np.abs(ml(2.0, 1.0, -t) - np.cos(np.sqrt(t))))
    xn = x[x != 0]
    e12 = np.max(np.abs(ml(1.0, 2.0, xn) - np.expm1(xn) / xn))
    ok = e11 <= 1e-12 and e21 <= 1e-10 and e12 <= 1e-11
    return ok, {"E11_vs_exp": e11, "E21_vs_cos": e21, "E12_vs_expm1": e12}, "1e-12 / 1e-10 / 1e-11"


def criterion_2():
    metrics = {}
    ok = True
    for a in (0.3, 0.5, 0.7, 1.2, 1.5):
        for name, beta, expo in (("es0", 1.0, 1), ("es2", a, 2)):
            cs = []
            for n in (2000, 4000):
                holds, c = check_bound_es0(a, beta, np.geomspace(1e-3, 1e6, n), exponent=expo)
                ok &= holds
                cs.append(c)
            drift = abs(cs[1] / cs[0] - 1)
            ok &= drift <= 0.01
            metrics[f"{name}_a{a}_c"] = cs[1]
            metrics[f"{name}_a{a}_drift"] = drift
    return ok, metrics, "finite, refinement drift <= 1%"


def _forward_case(alpha, n_modes, n_steps, n_cells):
    g = Grid((1.0,), (n_cells,))
    c = CoefficientField.constant(g)
    es = eigensolve(assemble(c, g), n_modes)
    h = np.zeros(g.shape)
    h[0] = 1.0
    inp = BoundaryInput(PolyBump.for_order(alpha, 0.5), h, BoundaryPatch(g, (("left",),)), T0=1.0)
    tr = solve_spectral(inp, es, alpha, n_steps)
    orc = solve_oracle(inp, c, alpha, n_steps)
    return relative_error_rho(tr.at(1.0), orc.at(1.0), c, g)


def criterion_3():
    metrics = {}
    ok = True
    for a in (0.4, 0.8, 1.5):
        coarse = _forward_case(a, 32, 1000, 256)
        fine = _forward_case(a, 64, 2000, 512)
        metrics[f"a{a}_err"] = fine
        metrics[f"a{a}_err_coarse"] = coarse
        ok &= fine <= 1e-3 and fine < coarse
    return ok, metrics, "rel L2_rho <= 1e-3 at 64/2000/512, decreasing"


def _dn_case_1d(alpha, n_cells, n_steps):
    g = Grid((1.0,), (n_cells,))
    c = CoefficientField.constant(g)
    es = eigensolve(assemble(c, g), n_cells - 1)
    s_in = BoundaryPatch(g, (("left",),))
    s_out = BoundaryPatch(g, (("right",),))
    bsd = boundary_flux(es, c, full_boundary_patch(g))
    h = np.zeros(g.shape)
    h[0] = 1.0
    inp = BoundaryInput(PolyBump.for_order(alpha, 0.5), h, s_in, T0=0.8)
    return inp, bsd, c, s_out


def _dn_case_2d(alpha, n_cells, n_steps):
    g = Grid((1.0, 1.0), (n_cells, n_cells))
    X, Y = g.coords()
    c = CoefficientField(1 + 0.3 * X, 1 + 0.2 * Y, 0 * X)
    es = eigensolve(assemble(c, g), (n_cells - 1) ** 2)
    s_in = BoundaryPatch(g, (("left", 1, n_cells),))
    s_out = BoundaryPatch(g, (("right", 1, n_cells),))
    bsd = boundary_flux(es, c, full_boundary_patch(g))
    h = np.zeros(g.shape)
    h[0, 1:n_cells] = np.sin(np.pi * g.axes()[1][1:n_cells])
    inp = BoundaryInput(PolyBump.for_order(alpha, 0.5), h, s_in, T0=0.8)
    return inp, bsd, c, s_out


def criterion_4():
    metrics = {}
    ok = True
    signs = []
    sign = dnmap.DN_SIGN
    levels = {"1d": (_dn_case_1d, ((256, 1000), (512, 2000))), "2d": (_dn_case_2d, ((20, 1000), (40, 2000)))}
    for label, (make, lv) in levels.items():
        for a in (0.4, 0.8, 1.5):
            errs = []
            for n_cells, n_steps in lv:
                inp, bsd, c, s_out = make(a, n_cells, n_steps)
                raw = dnmap.dn_apply(inp, bsd, a, s_out, sign=1)
                orc = dnmap.dn_oracle(inp, c, a, s_out, n_steps)
                signs.append(dnmap.calibrate_sign(raw.flux, orc.flux))
                errs.append(dnmap.relative_discrepancy(sign * raw.flux, orc.flux))
            metrics[f"{label}_a{a}_err"] = errs[1]
            metrics[f"{label}_a{a}_err_coarse"] = errs[0]
            ok &= errs[1] <= 1e-2 and errs[1] < errs[0]
    consistent = len(set(signs)) == 1 and signs[0] == sign
    metrics["sigma"] = signs[0]
    metrics["sigma_consistent"] = consistent
    return ok and consistent, metrics, "rel <= 1e-2, improving, one sigma"


def _roundtrip(bsd, alpha, patch, n):
    m = series_model(bsd, alpha, patch, patch)
    return strip_poles(m.continuation, n, alpha, m.basis_weights)


def criterion_5():
    metrics = {}
    ok = True
    g = Grid((1.0,), (64,))
    both = full_boundary_patch(g)
    bsd = analytic_interval_bsd(8, g)
    for a in (0.5, 1.5):
        rec = _roundtrip(bsd, a, both, 8)
        el = float(np.max(np.abs(rec.eigenvalues / bsd.eigenvalues - 1)))
        ek = max(float(np.max(np.abs(rec.kernels[n] - bsd.theta(n)))) for n in range(8))
        metrics[f"a{a}_lambda_rel"] = el
        metrics[f"a{a}_theta_abs"] = ek
        ok &= el <= 1e-8 and ek <= 1e-6
    return ok, metrics, "lambda rel <= 1e-8, Theta abs <= 1e-6"


def criterion_6():
    g = Grid((1.0,), (256,))
    x = g.coords()[0]
    both = full_boundary_patch(g)
    c0 = CoefficientField(np.ones_like(x), 1 + 0.5 * x, 2 + np.sin(3 * x))
    c1 = c0.shifted(1.0)
    e0 = eigensolve(assemble(c0, g), 8)
    e1 = eigensolve(assemble(c1, g), 8)
    comp = float(np.max(np.abs(e1.eigenvalues - e0.eigenvalues - 1)))
    b0, b1 = boundary_flux(e0), boundary_flux(e1)
    flux_change = float(np.max(np.abs(b1.fluxes - b0.fluxes)))
    a = 0.6
    r0 = _roundtrip(b0, a, both, 8)
    r1 = _roundtrip(b1, a, both, 8)
    rec = float(np.max(np.abs(r1.eigenvalues - r0.eigenvalues - 1)))
    kern = max(float(np.max(np.abs(k1 - k0))) for k0, k1 in zip(r0.kernels, r1.kernels))
    ok = comp <= 1e-8 and rec <= 1e-8 and kern <= 1e-6 and flux_change <= 1e-6
    return ok, {"computed_shift": comp, "recovered_shift": rec, "kernel_change": kern, "flux_change": flux_change}, (
        "shift 1 within 1e-8, kernels within 1e-6"
    )


def gauge_desk_pair(n_cells, amplitude=0.2):
    """1D gauge pair used by the acceptance run: kappa = 1 + interior bump."""
    g = Grid((1.0,), (n_cells,))
    x = g.coords()[0]
    c = CoefficientField(1 + 0.2 * x, 1 + 0.3 * x**2, 20 + 0 * x)
    mc1 = isotropic_to_manifold(c, 1)
    kappa = smooth_bump(g, 0.5, 0.3, amplitude)
    return GaugePair(kappa, mc1, gauge_transform(mc1, kappa, g), g)


def _gauge_inputs(g, alpha=0.5):
    h = np.zeros(g.shape)
    h[0] = 1.0
    return [BoundaryInput(PolyBump.for_order(alpha, 0.5), h, BoundaryPatch(g, (("left",),)), T0=0.8)]


def criterion_7():
    a = 0.5
    out = {}
    for n in (512, 1024):
        p = gauge_desk_pair(n)
        out[n] = gauge_invariance_check(p, _gauge_inputs(p.grid, a), a, full_boundary_patch(p.grid))
    p = gauge_desk_pair(512)
    ctrl = gauge_invariance_check(p, _gauge_inputs(p.grid, a), a, full_boundary_patch(p.grid), control=True)
    ok = out[512] <= 1e-4 and out[512] / out[1024] >= 2 and ctrl >= 10 * out[512]
    return ok, {"gauge_512": out[512], "gauge_1024": out[1024], "ratio": out[512] / out[1024], "control_512": ctrl}, (
        "<= 1e-4 at 512, >= 2x drop at 1024, control >= 10x"
    )


def criterion_8():
    g = Grid((1.0,), (4096,))
    c = CoefficientField.constant(g)
    es = eigensolve(assemble(c, g), 10)
    gb = np.zeros(g.shape)
    gb[-1] = 1.0
    # the Green flux pairs exactly with the stencil; the one-sided flux is an independent route
    e1b = {}
    for method in ("green", "stencil"):
        lhs, rhs = lift_coefficient_identity(es, boundary_flux(es, method=method), gb)
        e1b[method] = float(np.max(np.abs(lhs - rhs) / np.abs(rhs)))
    g2 = Grid((1.0,), (8192,))
    es2 = eigensolve(assemble(CoefficientField.constant(g2), g2), 256)
    gb2 = np.zeros(g2.shape)
    gb2[-1] = 1.0
    s = ell1c_ratio(boundary_flux(es2), gb2)
    e1c = abs(s - 1 / 3)
    ok = max(e1b.values()) <= 1e-4 and e1c <= 1e-4
    return ok, {"ell1b_rel": e1b["green"], "ell1b_rel_stencil": e1b["stencil"], "ell1c_sum": s, "ell1c_err": e1c}, "1e-4"


def criterion_9():
    g = Grid((1.0,), (64,))
    n = 50
    full = full_boundary_patch(g)
    left = BoundaryPatch(g, (("left",),))
    bsd = analytic_interval_bsd(n, g)
    rf, _, _ = hassell_tao_ratio(bsd, full)
    rl, _, _ = hassell_tao_ratio(bsd, left)
    ef = float(np.max(np.abs(rf - 0.25)))
    el = float(np.max(np.abs(rl - 0.5)))
    # finite-difference fluxes, reported only (discretization-limited)
    gn = Grid((1.0,), (4096,))
    num = boundary_flux(eigensolve(assemble(CoefficientField.constant(gn), gn), 10))
    rn, _, _ = hassell_tao_ratio(num, full_boundary_patch(gn))
    en = float(np.max(np.abs(rn - 0.25)))
    return ef <= 1e-6 and el <= 1e-6, {"full_dev": ef, "endpoint_dev": el, "numerical_full_dev": en}, "1e-6 (analytic fluxes)"


def criterion_10():
    p = gauge_desk_pair(512)
    g = p.grid
    c1, c2 = p.coefficients()
    h = np.zeros(g.shape)
    h[0] = 1.0
    inp = BoundaryInput(PolyBump(0.5, 4), h, BoundaryPatch(g, (("left",),)), T0=2.0)
    t = np.linspace(0.0, 2.0, 401)
    traces = []
    for c in (c1, c2):
        es = eigensolve(assemble(c, g), 64)
        traces.append(hyperbolic_dn(inp, boundary_flux(es), t, full_boundary_patch(g), sign=dnmap.DN_SIGN, n_modes=64))
    d = float(np.max(np.abs(traces[0] - traces[1])))
    scale = float(np.max(np.abs(traces[0])))
    return d <= 1e-3, {"max_diff": d, "trace_max": scale}, "max-norm <= 1e-3"


CRITERIA = {
    1: ("Mittag-Leffler identities", criterion_1, 5),
    2: ("decay bounds finite and refinement-stable", criterion_2, 30),
    3: ("forward spectral vs time-stepping oracle", criterion_3, 360),
    4: ("DN representation vs oracle", criterion_4, 180),
    5: ("inverse round trip", criterion_5, 60),
    6: ("potential shift identity", criterion_6, 60),
    7: ("gauge invariance of the DN map", criterion_7, 180),
    8: ("elliptic lift identities", criterion_8, 30),
    9: ("Hassell-Tao ratios", criterion_9, 10),
    10: ("hyperbolic DN for gauge pairs", criterion_10, 60),
}


def run_criterion(k):
    title, fn, budget = CRITERIA[k]
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", dnmap.TruncationWarning)
            ok, metrics, tol = fn()
        err = None
    except Exception as exc:  # report and continue with the other criteria
        ok, metrics, tol = False, {}, "-"
        err = f"{type(exc).__name__}: {exc}"
        traceback.print_exc()
    return CriterionResult(k, title, bool(ok), metrics, tol, time.perf_counter() - t0, budget, err)


def run_criteria(selected=None, echo=None):
    ids = sorted(CRITERIA) if selected is None else list(selected)
    results = []
    for k in ids:
        r = run_criterion(k)
        if echo is not None:
            echo(r.line())
        results.append(r)
    return results
