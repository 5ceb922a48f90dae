"""Covariance functions and Gram matrices.

Three kinds of covariance are supported:

* :class:`IsotropicKernel` -- ``R(t) = v exp(-(a t)^2)`` (squared-exponential)
  or ``R(t) = v exp(-a t)`` (exponential, the isotropic Ornstein-Uhlenbeck
  field), with ``a`` the ``scale`` and ``v`` the ``variance``.
* :class:`TabulatedKernel` -- a user supplied isotropic ``R`` sampled at
  increasing distances and interpolated monotonically.
* :class:`IndexedCovariance` -- an explicit covariance matrix over a finite
  index set; "points" are integer labels.  Used for non-isotropic toy models.

Everything that consumes a covariance only relies on ``cov(X, Y)`` returning
the cross-covariance matrix between two point arrays.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.spatial.distance import cdist

from .errors import DomainError, NumericalError

PSD_TOL = 1e-10

_FAMILY_ALIASES = {
    "squared-exponential": "squared-exponential",
    "squared_exponential": "squared-exponential",
    "se": "squared-exponential",
    "gaussian": "squared-exponential",
    "exponential": "exponential",
    "exp": "exponential",
    "ou": "exponential",
}


def as_points(points, dim=None):
    """Return ``points`` as a 2-d float array of shape ``(n, d)``.

    A 1-d input is read as ``n`` points on the line.  An empty input
    becomes a ``(0, dim)`` array.
    """
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return np.zeros((0, 1 if dim is None else dim))
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim in (None, 1) else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DomainError(f"points must be a 2-d array, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise DomainError(f"expected {dim}-dimensional points, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("points must have finite coordinates")
    return arr


class _Isotropic:
    """Shared behaviour of the isotropic kernels (``R`` of a distance)."""

    monotone = True

    def __call__(self, distance):
        raise NotImplementedError

    def cov(self, X, Y=None):
        X = as_points(X)
        Y = X if Y is None else as_points(Y, X.shape[1])
        if X.shape[0] == 0 or Y.shape[0] == 0:
            return np.zeros((X.shape[0], Y.shape[0]))
        return self(cdist(X, Y))

    @property
    def variance(self):
        return float(self(0.0))


@dataclass(frozen=True)
class IsotropicKernel(_Isotropic):
    """Closed-form stationary isotropic covariance."""

    family: str = "squared-exponential"
    scale: float = 1.0
    variance: float = 1.0

    def __post_init__(self):
        fam = _FAMILY_ALIASES.get(str(self.family).lower())
        if fam is None:
            raise DomainError(f"unknown kernel family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if not self.scale > 0:
            raise DomainError("kernel scale must be positive")
        if not self.variance > 0:
            raise DomainError("kernel variance must be positive")

    def __call__(self, distance):
        t = np.asarray(distance, dtype=float)
        if np.any(t < 0):
            raise DomainError("distance must be nonnegative")
        if self.family == "squared-exponential":
            out = self.variance * np.exp(-((self.scale * t) ** 2))
        else:
            out = self.variance * np.exp(-self.scale * t)
        return out if out.ndim else float(out)

    def with_variance(self, variance):
        return IsotropicKernel(self.family, self.scale, variance)

    def to_dict(self):
        return {"family": self.family, "scale": self.scale, "variance": self.variance}


@dataclass(frozen=True, eq=False)
class TabulatedKernel(_Isotropic):
    """Isotropic kernel given by samples ``(distance, value)``.

    Interpolation is PCHIP, which preserves monotonicity of the samples.
    When all values are positive the interpolation runs on
    ``(log1p(distance), log(value))`` so that power-law tails are
    reproduced without a very dense table.  Distances beyond the last
    sample are rejected rather than extrapolated.
    """

    distances: np.ndarray
    values: np.ndarray
    _interp: object = field(init=False, repr=False)
    _logspace: bool = field(init=False, repr=False)

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=float).ravel()
        v = np.asarray(self.values, dtype=float).ravel()
        if d.size != v.size or d.size < 2:
            raise DomainError("tabulated kernel needs at least two (distance, value) pairs")
        if d[0] != 0.0:
            raise DomainError("tabulated kernel must start at distance 0")
        if np.any(np.diff(d) <= 0):
            raise DomainError("tabulated distances must be strictly increasing")
        if np.any(np.abs(v) > v[0] * (1 + 1e-12)) or not v[0] > 0:
            raise DomainError("tabulated values must satisfy |R(t)| <= R(0) with R(0) > 0")
        logspace = bool(np.all(v > 0))
        if logspace:
            interp = PchipInterpolator(np.log1p(d), np.log(v), extrapolate=False)
        else:
            interp = PchipInterpolator(d, v, extrapolate=False)
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_interp", interp)
        object.__setattr__(self, "_logspace", logspace)

    @property
    def monotone(self):
        return bool(np.all(np.diff(self.values) <= 0))

    @property
    def max_distance(self):
        return float(self.distances[-1])

    def __call__(self, distance):
        t = np.asarray(distance, dtype=float)
        if np.any(t < 0):
            raise DomainError("distance must be nonnegative")
        if np.any(t > self.distances[-1] * (1 + 1e-12)):
            raise DomainError(
                f"distance {float(np.max(t)):g} beyond tabulated range {self.distances[-1]:g}"
            )
        t = np.minimum(t, self.distances[-1])
        if self._logspace:
            out = np.exp(self._interp(np.log1p(t)))
        else:
            out = self._interp(t)
        return out if out.ndim else float(out)

    @classmethod
    def from_function(cls, func, max_distance, n=4001):
        """Tabulate ``func`` on a grid that is dense near zero."""
        d = np.concatenate([[0.0], np.expm1(np.linspace(0.0, np.log1p(max_distance), n))[1:]])
        return cls(d, func(d))

    @classmethod
    def from_csv(cls, path):
        """Read ``distance,value`` rows; a non-numeric first row is a header."""
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    if rows:
                        raise DomainError(f"bad row in tabulated kernel file: {row}")
        if not rows:
            raise DomainError(f"no data in tabulated kernel file {path}")
        d, v = np.array(rows).T
        return cls(d, v)

    def to_dict(self):
        return {"family": "tabulated", "points": int(self.distances.size),
                "max_distance": self.max_distance}


@dataclass(frozen=True, eq=False)
class IndexedCovariance:
    """Explicit covariance matrix over the labels ``0, ..., n-1``.

    Points passed to :meth:`cov` are integer labels (shape ``(k,)`` or
    ``(k, 1)``).
    """

    matrix: np.ndarray
    monotone = False

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError("covariance matrix must be square")
        if not np.allclose(m, m.T, atol=1e-12):
            raise DomainError("covariance matrix must be symmetric")
        object.__setattr__(self, "matrix", m)

    def _labels(self, X):
        idx = as_points(X, 1)[:, 0]
        lab = np.rint(idx).astype(int)
        if np.any(np.abs(idx - lab) > 0) or np.any(lab < 0) or np.any(lab >= self.matrix.shape[0]):
            raise DomainError("points of an indexed covariance must be valid integer labels")
        return lab

    def cov(self, X, Y=None):
        i = self._labels(X)
        j = i if Y is None else self._labels(Y)
        return self.matrix[np.ix_(i, j)]

    @property
    def variance(self):
        return float(np.max(np.diag(self.matrix)))

    def to_dict(self):
        return {"family": "indexed", "matrix": self.matrix.tolist()}


def eval_kernel(kernel, distance):
    """``R(distance)`` for an isotropic kernel; rejects negative distances."""
    if np.any(np.asarray(distance) < 0):
        raise DomainError("distance must be nonnegative")
    return kernel(distance)


@dataclass(frozen=True, eq=False)
class CovMatrix:
    """Gram matrix of a covariance over an ordered point list."""

    points: np.ndarray
    entries: np.ndarray

    @property
    def size(self):
        return self.entries.shape[0]

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.entries)[0])


def check_psd(matrix, tol=PSD_TOL):
    """Raise :class:`NumericalError` if ``matrix`` has an eigenvalue below
    ``-tol * ||matrix||``.  Returns the eigen-decomposition."""
    m = np.asarray(matrix, dtype=float)
    if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max(initial=0))):
        raise NumericalError("Gram matrix is not symmetric")
    lam, vec = np.linalg.eigh(m)
    scale = max(np.abs(lam).max(initial=0.0), np.finfo(float).tiny)
    if lam.size and lam[0] < -tol * scale:
        raise NumericalError(
            f"Gram matrix is not positive semidefinite: min eigenvalue {lam[0]:.3e} "
            f"(norm {scale:.3e})"
        )
    return lam, vec


def gram(kernel, points, check=True):
    """Build the :class:`CovMatrix` of ``kernel`` over ``points``."""
    if isinstance(kernel, IndexedCovariance):
        pts = as_points(points, 1)
    else:
        pts = as_points(points)
    if pts.shape[0] == 0:
        raise DomainError("gram needs at least one point")
    entries = kernel.cov(pts)
    entries = 0.5 * (entries + entries.T)
    if check:
        check_psd(entries)
    return CovMatrix(pts, entries)


def psd_factor(matrix, tol=PSD_TOL):
    """Return ``F`` with ``F @ F.T`` equal to ``matrix`` up to clipping of
    eigenvalues that are negative within tolerance.

    An eigen-decomposition is used instead of a (jittered) Cholesky
    factorization so that rank-deficient matrices are factored exactly.
    """
    lam, vec = check_psd(matrix, tol)
    return vec * np.sqrt(np.clip(lam, 0.0, None))


def kernel_from_config(cfg):
    """Build a kernel from a mapping ``{family, scale, variance}``.

    ``family = tabulated`` reads ``path`` as a ``distance,value`` CSV.
    """
    fam = str(cfg.get("family", "squared-exponential")).lower()
    if fam == "tabulated":
        if "path" not in cfg:
            raise DomainError("tabulated kernel needs a 'path'")
        return TabulatedKernel.from_csv(cfg["path"])
    return IsotropicKernel(fam, float(cfg.get("scale", 1.0)), float(cfg.get("variance", 1.0)))
