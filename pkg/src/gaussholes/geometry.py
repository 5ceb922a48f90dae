"""Discrete measures, sphere quadrature and sphere integrals.

Rotation-invariant integrals over a sphere are reduced to one-dimensional
integrals in the polar angle seen from a fixed pole.  For the uniform
measure ``mu_h`` on ``S_rho`` and a point ``x`` at distance ``s`` from the
center,

    int R(|t - x|) mu_h(dt) = int_0^pi R(sqrt(rho^2 + s^2 - 2 rho s cos th)) nu_d(dth)

with ``nu_2(dth) = dth / pi`` and ``nu_3(dth) = sin(th) dth / 2``.  The
sphere energy ``D(rho)`` is the case ``s = rho``.  These one-dimensional
integrals are computed with Gauss-Legendre (smooth integrands) or
Gauss-Jacobi (the algebraic singularity of the chord-power integral).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .errors import DomainError, NumericalError
from .kernels import as_points

DEFAULT_GRID = {1: 1, 2: 512, 3: 32}
DEFAULT_ANGULAR_NODES = 512
WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure with finitely many atoms."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = as_points(self.points)
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] == 0:
            raise DomainError("a discrete measure needs at least one atom")
        if w.size != pts.shape[0]:
            raise DomainError("one weight per atom is required")
        if np.any(w < 0):
            raise DomainError("measure weights must be nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_TOL * max(1, w.size):
            raise DomainError(f"measure weights sum to {w.sum():.15g}, not 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, points, weights):
        w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        total = w.sum()
        if not total > 0:
            raise DomainError("cannot normalize a zero measure")
        return cls(points, w / total)

    @classmethod
    def point_mass(cls, point):
        return cls(as_points(np.atleast_1d(point)).reshape(1, -1), [1.0])

    @classmethod
    def uniform(cls, points):
        pts = as_points(points)
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def size(self):
        return self.weights.size

    def potential(self, kernel, at):
        """``int R(x, s) mu(ds)`` for every row ``x`` of ``at``."""
        return kernel.cov(as_points(at, self.dim), self.points) @ self.weights

    def mixture(self, other, w):
        """``w * other + (1 - w) * self`` on the union of the supports."""
        pts = np.vstack([other.points, self.points])
        return DiscreteMeasure(pts, np.concatenate([w * other.weights, (1 - w) * self.weights]))


@dataclass(frozen=True, eq=False)
class SphereGrid(DiscreteMeasure):
    """Discrete approximation of ``mu_h`` on the sphere ``S_rho(center)``."""

    radius: float = 0.0
    resolution: int = 1


@lru_cache(maxsize=32)
def _gauss_legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def sphere_grid(d, rho, n=None, center=None):
    """Quadrature approximation of the uniform measure on a sphere.

    d = 1: the two atoms ``center -+ rho`` (exact).
    d = 2: ``n`` equally spaced angles with weight ``1/n``.
    d = 3: ``n`` Gauss-Legendre nodes in the cosine of the polar angle
    times ``2n`` uniform azimuths.
    """
    if d not in (1, 2, 3):
        raise DomainError(f"sphere_grid supports d in {{1, 2, 3}}, got {d}")
    if not rho >= 0:
        raise DomainError("radius must be nonnegative")
    n = DEFAULT_GRID[d] if n is None else int(n)
    if n < 1:
        raise DomainError("resolution must be at least 1")
    if d == 1:
        unit = np.array([[-1.0], [1.0]])
        w = np.array([0.5, 0.5])
    elif d == 2:
        ang = 2 * np.pi * np.arange(n) / n
        unit = np.column_stack([np.cos(ang), np.sin(ang)])
        w = np.full(n, 1.0 / n)
    else:
        x, wx = _gauss_legendre(n)
        phi = np.pi * np.arange(2 * n) / n
        s = np.sqrt(1 - x * x)
        unit = np.column_stack([
            np.outer(s, np.cos(phi)).ravel(),
            np.outer(s, np.sin(phi)).ravel(),
            np.repeat(x, 2 * n),
        ])
        w = np.repeat(wx / 2, 2 * n) / (2 * n)
        w = w / w.sum()
    c = np.zeros(d) if center is None else as_points(np.atleast_1d(center), d)[0]
    return SphereGrid(c + rho * unit, w, radius=float(rho), resolution=n)


def double_integral(kernel, mu, nu=None):
    """``sum_ij mu_i nu_j R(s_i, t_j)`` -- the kernel energy of a pair of
    discrete measures."""
    nu = mu if nu is None else nu
    if mu.dim != nu.dim:
        raise DomainError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    return float(mu.weights @ kernel.cov(mu.points, nu.points) @ nu.weights)


def _angular_rule(d, n):
    """Nodes ``th`` in (0, pi) and weights for ``nu_d`` (see module doc)."""
    x, w = _gauss_legendre(n)
    th = 0.5 * np.pi * (x + 1)
    if d == 2:
        return th, 0.5 * w
    if d == 3:
        return th, 0.25 * np.pi * w * np.sin(th)
    raise DomainError(f"angular rule needs d in {{2, 3}}, got {d}")


def sphere_potential(kernel, d, rho, offset, n=DEFAULT_ANGULAR_NODES):
    """``int R(|t - x|) mu_h(dt)`` over ``S_rho(0)`` for points ``x`` at
    distances ``offset`` (scalar or array) from the center."""
    s = np.asarray(offset, dtype=float)
    if rho < 0 or np.any(s < 0):
        raise DomainError("radius and offsets must be nonnegative")
    if d == 1:
        out = 0.5 * (kernel(np.abs(rho - s)) + kernel(rho + s))
        return out if np.ndim(out) else float(out)
    th, w = _angular_rule(d, n)
    sq = rho * rho + s[..., None] ** 2 - 2 * rho * s[..., None] * np.cos(th)
    out = kernel(np.sqrt(np.clip(sq, 0.0, None))) @ w
    return out if np.ndim(out) else float(out)


def sphere_energy(kernel, d, rho, n=DEFAULT_ANGULAR_NODES):
    """``D(rho)``: the energy of the uniform measure on ``S_rho``.

    Exact for ``d = 1``; for ``d = 2, 3`` a Gauss-Legendre rule in the
    polar angle seen from one point of the sphere.
    """
    rho = np.asarray(rho, dtype=float)
    if d == 1:
        out = 0.5 * (kernel(0.0) + kernel(2 * rho))
    else:
        th, w = _angular_rule(d, n)
        chord = 2 * rho[..., None] * np.sin(0.5 * th)
        out = kernel(chord) @ w
    return out if np.ndim(out) else float(out)


def sphere_energy_grid(kernel, d, rho, n=None):
    """``D(rho)`` as the full double sum over :func:`sphere_grid`.

    Quadratic in the number of nodes; kept as an independent route for
    checking :func:`sphere_energy`.
    """
    g = sphere_grid(d, rho, n)
    return double_integral(kernel, g, g)


def I_integral(d, eps, n=64, return_error=False):
    """``I(d; eps) = int int |t1 - t2|^(-(d-1)+eps) mu_h(dt1) mu_h(dt2)``
    over the unit sphere.

    The chord power has an algebraic singularity at coincident points; it
    is absorbed into a Gauss-Jacobi weight in the polar angle, leaving a
    smooth factor.  With ``return_error`` the difference between ``n`` and
    ``2n`` nodes is returned as an error estimate.
    """
    if d not in (2, 3):
        raise DomainError(f"I_integral needs d in {{2, 3}}, got {d}")
    if not eps > 0:
        raise DomainError(f"I({d}; eps) diverges for eps <= 0")
    value = _jacobi_chord_integral(d, float(eps), int(n))
    if not np.isfinite(value):
        raise NumericalError(f"I({d}; {eps}) quadrature produced {value}")
    if return_error:
        return value, abs(_jacobi_chord_integral(d, float(eps), 2 * int(n)) - value)
    return value


def _jacobi_chord_integral(d, eps, n):
    p = eps - (d - 1)
    # th^beta carries the singularity; th = pi (1 + x) / 2
    beta = p if d == 2 else p + 1
    x, w = roots_jacobi(n, 0.0, beta)
    th = 0.5 * np.pi * (x + 1)
    ratio = np.ones_like(th)
    nz = th > 0
    ratio[nz] = 2 * np.sin(0.5 * th[nz]) / th[nz]
    jac = (0.5 * np.pi) ** (beta + 1)
    if d == 2:
        smooth = ratio ** p
        return float(jac * (smooth @ w) / np.pi)
    smooth = ratio ** (p + 1) * np.cos(0.5 * th)
    return float(0.5 * jac * (smooth @ w))
