"""Two-parameter Mittag-Leffler function E_{alpha,beta}(z).

Evaluation is routed between three regimes:

* power series for small |z| (when the terms do not grow enough to cause
  cancellation),
* the large-|z| expansion (algebraic tail plus the exponential pole
  contributions from the principal sheet),
* inversion of the Laplace transform ``s**(alpha-beta) / (s**alpha - z)`` on
  an optimal parabolic contour (Garrappa 2015) everywhere else.

All public functions accept scalars or arrays for ``z``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, rgamma

__all__ = [
    "MLQuery",
    "MLSeriesWarning",
    "SERIES_RADIUS",
    "ml",
    "ml_series",
    "ml_asymptotic",
    "ml_contour",
    "ml_with_info",
    "check_bound_es0",
]

SERIES_RADIUS = 10.0
# largest admissible term magnitude for the series route (cancellation guard)
SERIES_MAX_TERM = 10.0
ASYMPTOTIC_MIN_RADIUS = 2.0
ASYMPTOTIC_RTOL = 1e-15
CONTOUR_LOG_EPS = math.log(1e-15)

_LOG_MACH_EPS = math.log(np.finfo(float).eps)


class MLSeriesWarning(RuntimeWarning):
    """Raised when a truncated series has not converged to tolerance."""


@dataclass(frozen=True)
class MLQuery:
    alpha: float
    beta: float
    z: complex

    def __post_init__(self):
        _check_orders(self.alpha, self.beta)


def _check_orders(alpha, beta, alpha_max=None):
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if alpha_max is not None and alpha > alpha_max:
        raise ValueError(f"alpha must be <= {alpha_max}, got {alpha}")


def _series_nterms(alpha, beta, rmax, tol=1e-18, nmax=2000):
    if rmax == 0:
        return 1
    n = np.arange(nmax)
    logterm = n * math.log(rmax) - gammaln(alpha * n + beta)
    big = np.nonzero(logterm > math.log(tol))[0]
    if big.size == 0:
        return 1
    return int(min(big[-1] + 2, nmax))


def ml_series(alpha, beta, z, n_terms=None, radius=SERIES_RADIUS, tol=1e-16):
    """Partial sum ``sum_{n < n_terms} z**n / Gamma(alpha*n + beta)``.

    If ``n_terms`` is None it is chosen so that the neglected terms are below
    1e-18 in magnitude. A :class:`MLSeriesWarning` is emitted when the last
    retained term exceeds ``tol`` relative to the sum.
    """
    _check_orders(alpha, beta)
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    rmax = float(r.max()) if r.size else 0.0
    if rmax > radius:
        raise ValueError(f"|z| = {rmax:g} exceeds the series radius {radius:g}")
    if n_terms is None:
        n_terms = _series_nterms(alpha, beta, rmax)
    if n_terms < 1:
        raise ValueError("n_terms must be positive")
    coef = rgamma(alpha * np.arange(n_terms) + beta)
    out = np.zeros_like(z)
    for c in coef[::-1]:
        out = out * z + c
    with np.errstate(over="ignore", invalid="ignore"):
        last = np.abs(coef[-1]) * r ** (n_terms - 1) if n_terms > 1 else np.zeros_like(r)
    if np.any(last > tol * np.maximum(1.0, np.abs(out))):
        warnings.warn(
            f"Mittag-Leffler series not converged: last term {float(last.max()):.3e}",
            MLSeriesWarning,
            stacklevel=2,
        )
    return out


def _log_abs_rgamma(x):
    """log|1/Gamma(x)| and its sign, -inf at the poles of Gamma."""
    x = np.asarray(x, dtype=float)
    sign = np.sign(rgamma(x))
    with np.errstate(divide="ignore"):
        neg = x < 0.5
        s = np.sin(np.pi * x)
        # reflection keeps huge reciprocal values representable in log form
        val = np.where(
            neg,
            gammaln(1.0 - np.where(neg, x, 0.5)) + np.log(np.abs(s)) - math.log(math.pi),
            -gammaln(np.where(neg, 1.0, x)),
        )
    val = np.where(sign == 0, -np.inf, val)
    return val, sign


def _algebraic_terms(alpha, beta, z, n_terms):
    """Terms ``-z**(-k) / Gamma(beta - alpha*k)`` for k = 1..n_terms, shape (n, K)."""
    k = np.arange(1, n_terms + 1)
    lg, sg = _log_abs_rgamma(beta - alpha * k)
    logz = np.log(z)[:, None]
    with np.errstate(over="ignore", invalid="ignore"):
        mag = np.exp(-k[None, :] * logz.real + lg[None, :])
        terms = -sg[None, :] * mag * np.exp(-1j * k[None, :] * logz.imag)
    terms = np.where(sg[None, :] == 0, 0.0, terms)
    mag = np.where(sg[None, :] == 0, 0.0, mag)
    return terms, mag


def ml_asymptotic(alpha, beta, z, n_terms=20, radius=SERIES_RADIUS):
    """Truncated algebraic expansion ``-sum_{k=1}^{n_terms} z**(-k) / Gamma(beta - alpha*k)``.

    Valid for large |z| with ``|arg z| > pi*alpha/2``; arguments in the
    forbidden sector are rejected since the exponential contribution dominates
    there.
    """
    _check_orders(alpha, beta)
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    zf = z.ravel()
    if np.any(np.abs(zf) <= radius):
        raise ValueError(f"asymptotic expansion requires |z| > {radius:g}")
    if np.any(np.abs(np.angle(zf)) <= np.pi * alpha / 2):
        raise ValueError("argument inside the sector |arg z| <= pi*alpha/2")
    terms, _ = _algebraic_terms(alpha, beta, zf, n_terms)
    return terms.sum(axis=1).reshape(shape)


def _pole_terms(alpha, beta, z):
    """Exponential contributions (1/alpha) s**(1-beta) exp(s) of principal-sheet poles.

    Returns the sum and the largest exp(Re s) over poles close to the branch
    cut (where including or excluding them is ambiguous).
    """
    total = np.zeros(z.shape, dtype=complex)
    risky = np.zeros(z.shape)
    theta = np.angle(z)
    r = np.abs(z) ** (1.0 / alpha)
    jmin = int(math.floor(-alpha / 2 - 0.5)) - 1
    jmax = int(math.ceil(alpha / 2 + 0.5)) + 1
    for j in range(jmin, jmax + 1):
        phi = (theta + 2 * np.pi * j) / alpha
        inside = np.abs(phi) < np.pi
        s = r * np.exp(1j * phi)
        with np.errstate(over="ignore", invalid="ignore"):
            contrib = np.where(inside, s ** (1 - beta) * np.exp(s) / alpha, 0.0)
        total = total + contrib
        near_cut = np.abs(np.abs(phi) - np.pi) < 0.1
        risky = np.maximum(risky, np.where(near_cut, np.exp(r * math.cos(np.pi - 0.1)), 0.0))
    return total, risky


def _asymptotic_route(alpha, beta, z, kmax=100):
    """Full large-|z| expansion with optimal truncation.

    Truncation and the error estimate use the smooth envelope
    |z|**-k Gamma(alpha*k - beta + 1) / pi of the terms, so that accidental
    near-zeros of 1/Gamma do not fake convergence. Returns values, error
    estimates and a boolean acceptance mask.
    """
    terms, _ = _algebraic_terms(alpha, beta, z, kmax)
    k = np.arange(1, kmax + 1)
    x = alpha * k - beta + 1.0
    log_env = np.where(x > 0, gammaln(np.maximum(x, 1e-300)), 0.0) - math.log(math.pi)
    env = np.exp(log_env[None, :] - k[None, :] * np.log(np.abs(z))[:, None])
    exact = np.all(terms == 0, axis=1)
    kstar = np.argmin(env, axis=1)
    err = np.where(exact, 0.0, env[np.arange(z.size), kstar])
    keep = np.arange(kmax)[None, :] < kstar[:, None]
    alg = np.where(keep, terms, 0.0).sum(axis=1)
    poles, risky = _pole_terms(alpha, beta, z)
    val = alg + poles
    scale = np.abs(val)
    ok = np.isfinite(val) & (err <= ASYMPTOTIC_RTOL * scale + 1e-300)
    ok &= risky <= 1e-17 * scale + 1e-300
    return val, err, ok


# ---------------------------------------------------------------------------
# contour inversion (optimal parabolic contour)


def _optimal_param_rb(phi_j, phi_j1, pj, qj, log_epsilon, t=1.0):
    fac = 1.01
    f_max = math.exp(log_epsilon - _LOG_MACH_EPS)
    sq_phi_j = math.sqrt(phi_j)
    threshold = 2 * math.sqrt((log_epsilon - _LOG_MACH_EPS) / t)
    sq_phi_j1 = min(math.sqrt(phi_j1), threshold - sq_phi_j)
    f_bar = 1.0
    adm = False
    if pj < 1e-14 and qj < 1e-14:
        sq_bar_j, sq_bar_j1 = sq_phi_j, sq_phi_j1
        adm = True
    elif pj < 1e-14:
        sq_bar_j = sq_phi_j
        if sq_phi_j > 0:
            f_min = fac * (sq_phi_j / (sq_phi_j1 - sq_phi_j)) ** qj
        else:
            f_min = fac
        if f_min < f_max:
            f_bar = f_min + f_min / f_max * (f_max - f_min)
            fq = f_bar ** (-1 / qj)
            sq_bar_j1 = (2 * sq_phi_j1 - fq * sq_phi_j) / (2 + fq)
            adm = True
    elif qj < 1e-14:
        sq_bar_j1 = sq_phi_j1
        f_min = fac * (sq_phi_j1 / (sq_phi_j1 - sq_phi_j)) ** pj
        if f_min < f_max:
            f_bar = f_min + f_min / f_max * (f_max - f_min)
            fp = f_bar ** (-1 / pj)
            sq_bar_j = (2 * sq_phi_j + fp * sq_phi_j1) / (2 - fp)
            adm = True
    else:
        f_min = fac * (sq_phi_j + sq_phi_j1) / (sq_phi_j1 - sq_phi_j) ** max(pj, qj)
        if f_min < f_max:
            f_min = max(f_min, 1.5)
            f_bar = f_min + f_min / f_max * (f_max - f_min)
            fp = f_bar ** (-1 / pj)
            fq = f_bar ** (-1 / qj)
            w = -phi_j1 * t / log_epsilon
            den = 2 + w - (1 + w) * fp + fq
            sq_bar_j = ((2 + w + fq) * sq_phi_j + fp * sq_phi_j1) / den
            sq_bar_j1 = (-(1 + w) * fq * sq_phi_j + (2 + w - (1 + w) * fp) * sq_phi_j1) / den
            adm = True
    if not adm:
        return 0.0, 0.0, math.inf
    log_epsilon = log_epsilon - math.log(f_bar)
    w = -(sq_bar_j1**2) * t / log_epsilon
    mu = (((1 + w) * sq_bar_j + sq_bar_j1) / (2 + w)) ** 2
    h = -2 * math.pi / log_epsilon * (sq_bar_j1 - sq_bar_j) / ((1 + w) * sq_bar_j + sq_bar_j1)
    n = math.ceil(math.sqrt(1 - log_epsilon / t / mu) / h)
    return mu, h, n


def _optimal_param_ru(phi_j, pj, log_epsilon, t=1.0):
    sq_phi_j = math.sqrt(phi_j)
    phibar = phi_j * 1.01 if phi_j > 0 else 0.01
    sq_phibar = math.sqrt(phibar)
    f_min, f_max, f_tar = 1.0, 10.0, 5.0
    for _ in range(100):
        phi_t = phibar * t
        log_eps_phi_t = log_epsilon / phi_t
        n = math.ceil(phi_t / math.pi * (1 - 3 * log_eps_phi_t / 2 + math.sqrt(1 - 2 * log_eps_phi_t)))
        a = math.pi * n / phi_t
        sq_mu = sq_phibar * abs(4 - a) / abs(7 - math.sqrt(1 + 12 * a))
        fbar = ((sq_phibar - sq_phi_j) / sq_mu) ** (-pj)
        if pj < 1e-14 or f_min < fbar < f_max:
            break
        sq_phibar = f_tar ** (-1 / pj) * sq_mu + sq_phi_j
        phibar = sq_phibar**2
    mu = sq_mu**2
    h = (-3 * a - 2 + 2 * math.sqrt(1 + 12 * a)) / (4 - a) / n
    threshold = (log_epsilon - _LOG_MACH_EPS) / t
    if mu > threshold:
        q = 0.0 if abs(pj) < 1e-14 else f_tar ** (-1 / pj) * math.sqrt(mu)
        phibar = (q + math.sqrt(phi_j)) ** 2
        if phibar < threshold:
            w = math.sqrt(_LOG_MACH_EPS / (_LOG_MACH_EPS - log_epsilon))
            u = math.sqrt(-phibar * t / _LOG_MACH_EPS)
            mu = threshold
            n = math.ceil(w * log_epsilon / 2 / math.pi / (u * w - 1))
            h = w / n
        else:
            return mu, 0.0, math.inf
    return mu, h, n


def _contour_setup(alpha, beta, z, log_epsilon):
    """Contour parameters (mu, h, N) and the residue sum for one argument."""
    theta = math.atan2(z.imag, z.real)
    kmin = math.ceil(-alpha / 2 - theta / 2 / math.pi)
    kmax = math.floor(alpha / 2 - theta / 2 / math.pi)
    ks = np.arange(kmin, kmax + 1)
    s_star = abs(z) ** (1 / alpha) * np.exp(1j * (theta + 2 * ks * math.pi) / alpha)
    phi = (s_star.real + np.abs(s_star)) / 2
    order = np.argsort(phi, kind="stable")
    s_star, phi = s_star[order], phi[order]
    keep = phi > 1e-15
    s_star = np.concatenate([[0.0], s_star[keep]])
    phi = np.concatenate([[0.0], phi[keep], [math.inf]])
    j1_count = s_star.size
    p = [max(0.0, -2 * (alpha - beta + 1))] + [1.0] * (j1_count - 1)
    q = [1.0] * (j1_count - 1) + [math.inf]
    admissible = [
        j for j in range(j1_count)
        if phi[j] < (log_epsilon - _LOG_MACH_EPS) and phi[j] < phi[j + 1]
    ]
    while True:
        best = (0.0, 0.0, math.inf, 0)
        for j in admissible:
            if j < j1_count - 1:
                mu, h, n = _optimal_param_rb(phi[j], phi[j + 1], p[j], q[j], log_epsilon)
            else:
                mu, h, n = _optimal_param_ru(phi[j], p[j], log_epsilon)
            if n < best[2]:
                best = (mu, h, n, j)
        if best[2] <= 200:
            break
        log_epsilon += math.log(10)
    mu, h, n, j = best
    right = s_star[j + 1:]
    residues = complex(np.sum(right ** (1 - beta) * np.exp(right) / alpha)) if right.size else 0j
    return mu, h, int(n), residues


def ml_contour(alpha, beta, z, log_epsilon=CONTOUR_LOG_EPS):
    """E_{alpha,beta}(z) by trapezoidal quadrature of the inverse Laplace integral.

    The parabolic contour ``s(u) = mu (1 + iu)**2`` and its step are chosen to
    reach the target accuracy exp(log_epsilon); poles to the right of the
    contour enter through their residues.
    """
    _check_orders(alpha, beta)
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape, dtype=complex)
    flat = z.ravel()
    res = out.ravel()
    cache = {}
    for i, zi in enumerate(flat):
        if zi == 0:
            res[i] = rgamma(beta)
            continue
        key = None
        # without principal-sheet poles the contour does not depend on z
        if abs(math.atan2(zi.imag, zi.real)) > alpha * math.pi:
            key = "no-poles"
        if key in cache:
            mu, h, n, residues = cache[key]
        else:
            mu, h, n, residues = _contour_setup(alpha, beta, zi, log_epsilon)
            if key is not None:
                cache[key] = (mu, h, n, residues)
        u = h * np.arange(-n, n + 1)
        s = mu * (1j * u + 1) ** 2
        ds = -2 * mu * u + 2j * mu
        f = np.exp(s) * s ** (alpha - beta) / (s**alpha - zi) * ds
        res[i] = h * f.sum() / (2j * math.pi) + residues
    return res.reshape(z.shape)


# ---------------------------------------------------------------------------
# dispatcher

METHODS = ("series", "asymptotic", "contour")


def ml_with_info(alpha, beta, z, radius=SERIES_RADIUS):
    """Evaluate E_{alpha,beta}(z) and report the route taken and an error estimate.

    Returns ``(values, method_codes, error_estimates)`` where method codes
    index :data:`METHODS`.
    """
    _check_orders(alpha, beta, alpha_max=2.0)
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    zf = z.ravel()
    val = np.empty(zf.shape, dtype=complex)
    err = np.zeros(zf.shape)
    method = np.full(zf.shape, 2, dtype=np.int8)
    todo = np.ones(zf.shape, dtype=bool)

    r = np.abs(zf)
    small = r <= radius
    if small.any():
        nmax = _series_nterms(alpha, beta, float(r[small].max()))
        n = np.arange(nmax)
        with np.errstate(divide="ignore"):
            logr = np.log(r[small])
        logr = np.maximum(logr, -1e300)
        logterm = n[None, :] * logr[:, None] - gammaln(alpha * n + beta)[None, :]
        logterm[:, 0] = -gammaln(beta)
        maxterm = np.exp(np.minimum(logterm.max(axis=1), 700.0))
        idx = np.nonzero(small)[0][maxterm <= SERIES_MAX_TERM]
        if idx.size:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", MLSeriesWarning)
                val[idx] = ml_series(alpha, beta, zf[idx], radius=radius)
            method[idx] = 0
            err[idx] = np.finfo(float).eps * maxterm[maxterm <= SERIES_MAX_TERM] * 4
            todo[idx] = False

    cand = np.nonzero(todo & (r >= ASYMPTOTIC_MIN_RADIUS))[0]
    if cand.size:
        v, e, ok = _asymptotic_route(alpha, beta, zf[cand])
        sel = cand[ok]
        val[sel] = v[ok]
        err[sel] = e[ok]
        method[sel] = 1
        todo[sel] = False

    rest = np.nonzero(todo)[0]
    if rest.size:
        val[rest] = ml_contour(alpha, beta, zf[rest])
        err[rest] = 1e-15 * np.maximum(1.0, np.abs(val[rest]))
    return val.reshape(shape), method.reshape(shape), err.reshape(shape)


def ml(alpha, beta, z, radius=SERIES_RADIUS):
    """Mittag-Leffler function E_{alpha,beta}(z) for 0 < alpha <= 2, beta > 0.

    Real input gives real output; complex input gives complex output.
    """
    zarr = np.asarray(z)
    val, _, _ = ml_with_info(alpha, beta, zarr, radius=radius)
    if not np.iscomplexobj(zarr):
        val = val.real
    if zarr.ndim == 0:
        return val[()]
    return val


def check_bound_es0(alpha, beta, t_grid, exponent=1):
    """Fit the constant in ``|E_{alpha,beta}(-t)| <= c / (1 + t**exponent)``.

    Returns ``(holds, c)`` with ``c = max_t |E(-t)| (1 + t**exponent)`` over the
    grid and ``holds`` true when that supremum is finite.
    """
    t = np.asarray(t_grid, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t_grid must be strictly positive")
    vals = np.abs(ml(alpha, beta, -t)) * (1 + t**exponent)
    c = float(np.max(vals))
    return bool(np.isfinite(c)), c
