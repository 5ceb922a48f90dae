"""Most likely field profiles given a hole.

For ``K2 = {b}`` and an optimal measure ``mu`` on ``K1`` the limiting
profile ``x(t)`` of ``X / u`` given the hole event is

    first case:   x(t) = D_C * int R(t, s) mu(ds)
    second case:  x(t) = a(mu) * [ int R(t, s) mu(ds) - b(mu) R(t, b) ]

depending on which of the two dual minima is smaller.  Both are linear
combinations ``sum_i c_i R(t, t_i)``, so the profile is also available in
coefficient form (its RKHS norm is ``c^T Sigma c``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .geometry import DiscreteMeasure, sphere_grid
from .kernels import as_points

CASE_TIE_TOL = 1e-9
SHAPE_SAMPLES = 401


def _integrals(kernel, mu, hole):
    hole = as_points(np.atleast_1d(hole), mu.dim).reshape(1, -1)
    e = float(mu.weights @ kernel.cov(mu.points) @ mu.weights)
    q = float(kernel.cov(mu.points, hole)[:, 0] @ mu.weights)
    rbb = float(kernel.cov(hole)[0, 0])
    return e, q, rbb


def a_term(kernel, mu, hole, r):
    """``(R(b,b) - r q) / (R(b,b) e - q^2)`` with ``e`` the energy of ``mu``
    and ``q = int R(s, b) mu(ds)``.  ``nan`` when the denominator is not
    positive (``mu`` carries all the information about ``X(b)``)."""
    e, q, rbb = _integrals(kernel, mu, hole)
    den = rbb * e - q * q
    if den <= 0:
        return math.nan
    return (rbb - r * q) / den


def b_term(kernel, mu, hole, r):
    """``(r e - q) / (r q - R(b,b))``; ``nan`` on a zero denominator."""
    e, q, rbb = _integrals(kernel, mu, hole)
    den = r * q - rbb
    if den == 0:
        return math.nan
    return (r * e - q) / den


@dataclass(frozen=True, eq=False)
class ShapeFunction:
    """``x(t) = sum_i c_i R(t, t_i)`` with the case that produced it."""

    case: str
    kernel: object
    nodes: np.ndarray
    coefficients: np.ndarray
    info: dict = field(default_factory=dict)

    def __call__(self, t):
        pts = as_points(t, self.nodes.shape[1])
        out = self.kernel.cov(pts, self.nodes) @ self.coefficients
        return out if np.ndim(t) > 1 or out.size > 1 else float(out[0])

    def norm_squared(self):
        """RKHS norm squared, ``c^T Sigma c``."""
        return float(self.coefficients @ self.kernel.cov(self.nodes) @ self.coefficients)

    def section(self, rho, n=SHAPE_SAMPLES, center=None):
        """Samples along the first axis for ``t1 / rho`` in ``[0, 2]``."""
        s = np.linspace(0.0, 2.0, n)
        pts = np.zeros((n, self.nodes.shape[1]))
        if center is not None:
            pts += as_points(np.atleast_1d(center), self.nodes.shape[1])[0]
        pts[:, 0] += s * rho
        return s, self(pts)


def first_case_shape(kernel, mu, D_C):
    return ShapeFunction("first-min", kernel, mu.points, D_C * mu.weights, {"D_C": D_C})


def second_case_shape(kernel, mu, hole, r):
    hole = as_points(np.atleast_1d(hole), mu.dim).reshape(1, -1)
    a = a_term(kernel, mu, hole, r)
    b = b_term(kernel, mu, hole, r)
    if not (np.isfinite(a) and np.isfinite(b)):
        raise DomainError("second-case shape is degenerate for this measure")
    nodes = np.vstack([mu.points, hole])
    coef = a * np.concatenate([mu.weights, [-b]])
    return ShapeFunction("second-min", kernel, nodes, coef, {"a": a, "b": b})


def limiting_shape(kernel, k1, hole, r, dual=None, tie_tol=CASE_TIE_TOL, **dual_opts):
    """Limiting profile for ``K2 = {hole}``.

    ``dual`` is a :class:`gaussholes.dual.DualResult` for ``(k1, {hole}, r)``;
    it is computed when omitted.  The case is decided by the two minima;
    within ``tie_tol`` the first case is used and ``info["tie"]`` is set.
    """
    from .dual import dual_optimize

    hole = as_points(np.atleast_1d(hole), as_points(k1).shape[1]).reshape(1, -1)
    if dual is None:
        dual = dual_optimize(kernel, k1, hole, r, **dual_opts)
    tie = abs(dual.first_min - dual.second_min) <= tie_tol * max(1.0, dual.first_min)
    if dual.first_min <= dual.second_min or tie or dual.second_measures is None:
        shape = first_case_shape(kernel, dual.first_measure, 1.0 / dual.first_min)
    else:
        shape = second_case_shape(kernel, dual.second_measures.mu1, hole, r)
    shape.info.update({"tie": bool(tie), "first_min": dual.first_min,
                       "second_min": dual.second_min})
    return shape


def isotropic_shape(kernel, d, rho, r, n=None):
    """Shape for a hole at the center of a sphere, using the uniform measure
    on a sphere grid (optimal by rotation invariance in both cases)."""
    grid = sphere_grid(d, rho, n)
    mu = DiscreteMeasure(grid.points, grid.weights)
    center = np.zeros((1, d))
    e, q, rbb = _integrals(kernel, mu, center)
    if q <= r * e:
        shape = first_case_shape(kernel, mu, 1.0 / e)
    else:
        shape = second_case_shape(kernel, mu, center, r)
    shape.info.update({"rho": rho, "energy": e, "R_rho": q})
    return shape


def shape_from_primal(solution):
    """The witness profile of a primal solution as a :class:`ShapeFunction`."""
    prob = solution.problem
    return ShapeFunction("generic", prob.kernel, prob.nodes, solution.coefficients,
                         {"D": solution.value})


def constraint_report(shape, k1, hole, r):
    """Minimum of ``x - 1`` on ``k1`` and ``x(b) - r``."""
    dim = shape.nodes.shape[1]
    x1 = np.atleast_1d(shape(as_points(k1, dim)))
    xb = float(np.atleast_1d(shape(as_points(np.atleast_1d(hole), dim).reshape(1, -1)))[0])
    return {"k1_min": float(x1.min()), "hole_value": xb,
            "k1_ok": bool(x1.min() >= 1 - 1e-5), "hole_ok": bool(xb <= r + 1e-5)}
