"""Holes at the center of spheres for isotropic fields.

With ``R(0) = 1`` and ``D(rho)`` the energy of the uniform measure on the
sphere of radius ``rho``,

    H_rho(r) = (D - R(rho)^2) / (1 - 2 r R(rho) + r^2 D),
    W_rho(r) = D(rho) if R(rho) <= r D(rho) else H_rho(r),

and ``M_rho(r) = 1 / W_rho(r)`` is the rate for a hole of depth ``r`` at the
center of a sphere of radius ``rho``.  For general ``R(0)`` the first two
terms of ``H`` carry a factor ``R(0)``.

The boundary functional ``V(rho, b; mu)`` describes a hole at ``b rho e1``
instead of the center; ``mu`` is a measure on the unit sphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from ._parallel import pmap
from .errors import DomainError
from .geometry import DEFAULT_ANGULAR_NODES, DiscreteMeasure, sphere_energy, sphere_grid, sphere_potential

DEGENERATE_TOL = 1e-14
MIN_INT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class IsotropicHoleSpec:
    """Isotropic hole problem: kernel, dimension, depth and radius range."""

    kernel: object
    d: int
    r: float
    rho_max: float
    n_rho: int = 400
    n_b: int = 201
    angular_nodes: int = DEFAULT_ANGULAR_NODES

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise DomainError(f"dimension must be 1, 2 or 3, got {self.d}")
        if not 0 < self.r <= 1:
            raise DomainError(f"depth factor r must lie in (0, 1], got {self.r}")
        if not self.rho_max > 0:
            raise DomainError("rho_max must be positive")

    @property
    def R0(self):
        return float(self.kernel(0.0))

    def D(self, rho):
        out = sphere_energy(self.kernel, self.d, rho, self.angular_nodes)
        # the quadrature weights sum to 1 only up to rounding
        return np.where(np.asarray(rho) == 0, self.R0, out) if np.ndim(out) else (
            self.R0 if rho == 0 else out)

    def rho_grid(self, include_zero=False):
        lo = min(1e-3, self.rho_max / 2)
        grid = np.geomspace(lo, self.rho_max, self.n_rho)
        return np.concatenate([[0.0], grid]) if include_zero else grid

    def require_unit_variance(self):
        if abs(self.R0 - 1.0) > 1e-12:
            raise DomainError("the boundary-hole analysis assumes R(0) = 1")


def _H(R0, D, R, r):
    num = R0 * D - R * R
    den = R0 - 2 * r * R + r * r * D
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > DEGENERATE_TOL, num / np.where(den > 0, den, 1.0), 0.0)
    return out, den


def H_rho(spec, rho):
    """Second-branch formula, evaluated whatever the branch."""
    rho = np.asarray(rho, dtype=float)
    out, _ = _H(spec.R0, spec.D(rho), spec.kernel(rho), spec.r)
    return out if out.ndim else float(out)


def W_rho(spec, rho):
    """``(W_rho(r), branch)``: branch 1 when ``R(rho) <= r D(rho)``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise DomainError("radius must be nonnegative")
    D = spec.D(rho)
    R = spec.kernel(rho)
    H, _ = _H(spec.R0, D, R, spec.r)
    first = R <= spec.r * D
    W = np.where(first, D, H)
    branch = np.where(first, 1, 2)
    if W.ndim == 0:
        return float(W), int(branch)
    return W, branch


def M_rho(spec, rho):
    """``1 / W_rho(r)`` (``+inf`` where ``W`` vanishes)."""
    W = np.asarray(W_rho(spec, rho)[0])
    with np.errstate(divide="ignore"):
        out = np.where(W > 0, 1.0 / np.where(W > 0, W, 1.0), np.inf)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class RadiusProfile:
    rho: np.ndarray
    R: np.ndarray
    D: np.ndarray
    H: np.ndarray
    W: np.ndarray
    branch: np.ndarray

    def rows(self):
        return zip(self.rho, self.R, self.D, self.H, self.W, self.branch)


def radius_profile(spec, rho=None):
    rho = spec.rho_grid() if rho is None else np.asarray(rho, dtype=float)
    D = spec.D(rho)
    R = spec.kernel(rho)
    H, _ = _H(spec.R0, D, R, spec.r)
    first = R <= spec.r * D
    return RadiusProfile(rho, R, D, H, np.where(first, D, H), np.where(first, 1, 2))


def branch_switch_radius(spec, tol=1e-12):
    """Smallest grid-bracketed root of ``R(rho) - r D(rho)`` (``None`` if the
    sign never changes on the grid)."""
    grid = spec.rho_grid()
    f = spec.kernel(grid) - spec.r * spec.D(grid)
    idx = np.nonzero((f[:-1] > 0) & (f[1:] <= 0))[0]
    if not idx.size:
        return None
    lo, hi = grid[idx[0]], grid[idx[0] + 1]
    return brentq(lambda x: spec.kernel(x) - spec.r * spec.D(x), lo, hi, xtol=tol)


def _refine_max(func, grid, values, i, xtol=1e-6):
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    if hi <= lo:
        return float(grid[i]), float(values[i])
    res = minimize_scalar(lambda x: -func(x), bounds=(lo, hi), method="bounded",
                          options={"xatol": xtol})
    if -res.fun >= values[i]:
        return float(res.x), float(-res.fun)
    return float(grid[i]), float(values[i])


@dataclass(frozen=True)
class MostLikelyRadius:
    rho: float
    H: float
    W: float
    branch: int


def most_likely_radius(spec):
    """``argmax_rho H_rho(r)``: grid scan then bounded refinement."""
    if not getattr(spec.kernel, "monotone", False):
        raise DomainError("most_likely_radius needs a monotone kernel")
    if not 0 < spec.r < 1:
        raise DomainError("most_likely_radius needs 0 < r < 1")
    grid = spec.rho_grid()
    H = H_rho(spec, grid)
    i = int(np.argmax(H))
    rho, h = _refine_max(lambda x: H_rho(spec, x), grid, H, i)
    W, branch = W_rho(spec, rho)
    return MostLikelyRadius(rho, h, W, branch)


@dataclass(frozen=True)
class CenterRate:
    value: float
    rho: float
    branch: int
    diagnostic: str = ""


def center_rate(spec):
    """``D_C = min_{0 <= rho <= rho_max} M_rho(r)`` for a hole at the center."""
    grid = spec.rho_grid(include_zero=True)
    W, _ = W_rho(spec, grid)
    i = int(np.argmax(W))
    if not W[i] > 0:
        return CenterRate(math.inf, 0.0, 2, "W vanishes on the whole grid")
    rho, w = _refine_max(lambda x: W_rho(spec, x)[0], grid, W, i)
    return CenterRate(1.0 / w, rho, W_rho(spec, rho)[1])


# --------------------------------------------------------------------------
# holes away from the center


def g_profile(spec, rho, b):
    """``g(b) = int R(rho |t - b e1|) mu_h(dt)`` over the unit sphere."""
    return sphere_potential(spec.kernel, spec.d, rho, np.asarray(b, dtype=float) * rho,
                            spec.angular_nodes)


def V_eval(spec, rho, b, mu):
    """Boundary functional ``V(rho, b; mu)`` for a measure ``mu`` on the unit
    sphere (``+inf`` when the denominator vanishes)."""
    spec.require_unit_variance()
    if not 0 <= b <= 1:
        raise DomainError("b must lie in [0, 1]")
    pts = rho * mu.points
    hole = np.zeros((1, mu.dim))
    hole[0, 0] = b * rho
    e = float(mu.weights @ spec.kernel.cov(pts) @ mu.weights)
    q = float(spec.kernel.cov(pts, hole)[:, 0] @ mu.weights)
    den = 1 - 2 * spec.r * q + spec.r ** 2 * e
    if den <= DEGENERATE_TOL:
        return math.inf
    return (e - q * q) / den


def min_int_condition(spec, rho, tol=MIN_INT_TOL, return_profile=False):
    """Does ``min_b g(b)`` over ``[0, 1]`` sit at ``b = 0``?"""
    b = np.linspace(0.0, 1.0, spec.n_b)
    g = g_profile(spec, rho, b)
    ok = bool(g[0] <= g.min() + tol)
    return (ok, b, g) if return_profile else ok


@dataclass(frozen=True)
class Threshold:
    rho: float | None
    status: str


def min_int_threshold(spec, n_scan=400, xtol=1e-6):
    """Radius above which the center minimizes ``g``.

    The condition is scanned on a uniform grid of ``(0, rho_max]``; the last
    failure-to-success transition is bisected.  ``status`` is
    ``"not-found"`` when the condition does not change on the grid.
    """
    fam = getattr(spec.kernel, "family", None)
    if fam not in ("squared-exponential", "exponential") or spec.d not in (2, 3):
        raise DomainError("min_int_threshold supports the closed-form kernels in d = 2, 3")
    grid = np.linspace(spec.rho_max / n_scan, spec.rho_max, n_scan)
    ok = np.array(pmap(lambda x: min_int_condition(spec, x), grid))
    fails = np.nonzero(~ok)[0]
    if ok.all() or not ok.any() or fails[-1] == grid.size - 1:
        return Threshold(None, "not-found")
    lo, hi = grid[fails[-1]], grid[fails[-1] + 1]
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if min_int_condition(spec, mid):
            hi = mid
        else:
            lo = mid
    return Threshold(float(0.5 * (lo + hi)), "found")


@dataclass(frozen=True, eq=False)
class MixtureResult:
    measure: DiscreteMeasure
    w: float
    cond_ok: bool
    dominance_ok: bool
    V: float
    V_center: float


def mixture_weight(D, R1, g):
    """Minimizer over ``[0, 1]`` of the numerator of ``V`` along the mixture
    family; the numerator is the quadratic
    ``(1 - D - (R1 - g)^2) w^2 - 2 g (R1 - g) w + D - g^2``.
    Vectorized over ``R1`` and ``g``."""
    R1, g = np.broadcast_arrays(np.asarray(R1, dtype=float), np.asarray(g, dtype=float))
    lead = 1 - D - (R1 - g) ** 2
    lin = -2 * g * (R1 - g)
    with np.errstate(divide="ignore", invalid="ignore"):
        vertex = np.clip(np.where(lead > 0, -lin / (2 * lead), 0.0), 0.0, 1.0)
    cands = np.stack([np.zeros_like(g), vertex, np.ones_like(g)])
    num = lead * cands ** 2 + lin * cands
    # first minimizer wins, so ties go to the smaller weight
    w = np.take_along_axis(cands, np.argmin(num, axis=0)[None], 0)[0]
    return w if w.ndim else float(w)


def _mixture_scalars(spec, rho, b):
    b = np.asarray(b, dtype=float)
    D = spec.D(rho)
    R1 = spec.kernel(rho * (1 - b))
    g = g_profile(spec, rho, b)
    w = mixture_weight(D, R1, g)
    e = w * w + D * (1 - w * w)
    q = w * R1 + (1 - w) * g
    den = 1 - 2 * spec.r * q + spec.r ** 2 * e
    with np.errstate(divide="ignore", invalid="ignore"):
        V = np.where(den > DEGENERATE_TOL, (e - q * q) / den, np.inf)
    V0 = float(H_rho(spec, rho))
    cond_ok = q >= spec.r * e - 1e-12
    dom_ok = V <= V0 + 1e-12 * max(1.0, abs(V0))
    return w, V, V0, cond_ok, dom_ok


def mixture_search(spec, rho, b, n_grid=None):
    """Mixture ``w delta_{e1} + (1 - w) mu_h`` as a candidate for ``V_*(rho, b)``.

    The uniform part is represented by a sphere grid (``n_grid`` nodes;
    resolution defaults per dimension) for the returned measure, while the
    checks use the exact rotation-invariant integrals.
    """
    spec.require_unit_variance()
    if not 0 <= b <= 1:
        raise DomainError("b must lie in [0, 1]")
    w, V, V0, cond_ok, dom_ok = _mixture_scalars(spec, rho, b)
    w = float(w)
    grid = sphere_grid(spec.d, 1.0, n_grid)
    pole = np.zeros((1, spec.d))
    pole[0, 0] = 1.0
    measure = grid.mixture(DiscreteMeasure(pole, [1.0]), w)
    return MixtureResult(measure, w, bool(cond_ok), bool(dom_ok), float(V), V0)


@dataclass(frozen=True)
class AnywhereRate:
    value: float
    verified: bool
    center: CenterRate
    failures: tuple = ()


def _hypothesis_holds(spec, rho, bgrid):
    if min_int_condition(spec, rho):
        return True
    _, _, _, cond_ok, dom_ok = _mixture_scalars(spec, rho, bgrid)
    return bool(np.all(cond_ok & dom_ok))


def anywhere_rate(spec, check=True, n_rho_fallback=40, n_b_fallback=21, sphere_nodes=None):
    """Rate for a hole anywhere inside a sphere.

    When the maximum of ``V_*(rho, .)`` is certified to sit at ``b = 0`` for
    every radius with ``R(rho) >= r D(rho)`` (through the ``g``-minimum
    condition or a dominating mixture measure) the center rate is returned
    with ``verified=True``.  Otherwise the rate is computed by brute force
    over a ``(rho, b)`` grid: ``1 / min(D(rho), V_*(rho, b))`` is the rate of
    a discretized sphere with the single hole point ``b rho e1``.
    """
    spec.require_unit_variance()
    center = center_rate(spec)
    if check:
        grid = spec.rho_grid()
        relevant = grid[spec.kernel(grid) >= spec.r * spec.D(grid)]
        bgrid = np.linspace(0.0, 1.0, spec.n_b)
        ok = pmap(lambda x: _hypothesis_holds(spec, x, bgrid), relevant)
        failures = tuple(float(x) for x, good in zip(relevant, ok) if not good)
        if not failures:
            return AnywhereRate(center.value, True, center)
    else:
        failures = ()
    from .primal import HoleProblem, solve_primal

    rhos = np.linspace(spec.rho_max / n_rho_fallback, spec.rho_max, n_rho_fallback)
    bs = np.linspace(0.0, 1.0, n_b_fallback)

    def rate(item):
        rho, b = item
        k1 = sphere_grid(spec.d, rho, sphere_nodes or (64 if spec.d == 2 else 8)).points
        hole = np.zeros((1, spec.d))
        hole[0, 0] = b * rho
        return solve_primal(HoleProblem(spec.kernel, k1, hole, spec.r)).value

    vals = pmap(rate, [(x, b) for x in rhos for b in bs])
    return AnywhereRate(float(min(vals)), False, center, failures)
