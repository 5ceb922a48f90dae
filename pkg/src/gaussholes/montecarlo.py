"""Monte Carlo estimates of hole probabilities.

``Psi(u) = P(X > u on K1, X < r u on K2)`` is estimated on the finite node
set either by crude sampling or by exponential tilting along the optimal
functional ``H = c^T X`` of the primal problem: samples are drawn with mean
``u Sigma c`` and weighted by ``exp(-u H + u^2 E H^2 / 2)``.

Random numbers come from Philox streams.  Each ``u`` and each fixed-size
block of samples has its own stream derived from the seed, so results do
not depend on how blocks are distributed over threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._parallel import pmap
from .errors import DomainError
from .kernels import CovMatrix, IndexedCovariance, psd_factor

BLOCK = 1 << 16


@dataclass(frozen=True)
class McConfig:
    n_samples: int = 1_000_000
    u: tuple = (3.0, 4.0, 5.0)
    seed: int = 0
    estimator: str = "tilted"
    block: int = BLOCK

    def __post_init__(self):
        if int(self.n_samples) < 1:
            raise DomainError("sample count must be at least 1")
        u = tuple(float(x) for x in np.atleast_1d(self.u))
        if not u or any(x <= 0 for x in u) or any(b <= a for a, b in zip(u, u[1:])):
            raise DomainError("u grid must be positive and increasing")
        if self.estimator not in ("crude", "tilted"):
            raise DomainError(f"unknown estimator {self.estimator!r}")
        if int(self.block) < 1:
            raise DomainError("block size must be positive")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "n_samples", int(self.n_samples))


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    stderr: float
    ci: tuple
    status: str
    deviations: tuple = ()


@dataclass(frozen=True, eq=False)
class McEstimate:
    u: np.ndarray
    psi: np.ndarray
    stderr: np.ndarray
    ess: np.ndarray
    hits: np.ndarray
    estimator: str
    fit: RateFit
    flags: tuple = field(default_factory=tuple)

    @property
    def slope(self):
        return self.fit.slope

    def to_dict(self):
        return {
            "estimator": self.estimator,
            "estimates": [
                {"u": float(u), "psi": float(p), "stderr": float(s), "ess": float(e), "hits": int(h)}
                for u, p, s, e, h in zip(self.u, self.psi, self.stderr, self.ess, self.hits)
            ],
            "slope": self.fit.slope,
            "slope_ci": list(self.fit.ci),
            "fit_status": self.fit.status,
            "flags": list(self.flags),
        }


def _generator(seed_seq):
    return np.random.Generator(np.random.Philox(seed_seq))


def _factor(cov):
    if isinstance(cov, CovMatrix):
        m = cov.entries
    elif isinstance(cov, IndexedCovariance):
        m = cov.matrix
    else:
        m = np.asarray(cov, dtype=float)
    return psd_factor(0.5 * (m + m.T))


def sample_field(cov, n, seed=0):
    """``n`` draws of the centered Gaussian vector with covariance ``cov``
    (shape ``(n, m)``)."""
    F = _factor(cov)
    z = _generator(np.random.SeedSequence(seed)).standard_normal((int(n), F.shape[1]))
    return z @ F.T


def _block_sums(F, shift, c, u, lower, upper, size, seed_seq):
    """Pooled sums for one block: ``(sum w 1_A, sum w^2 1_A, hits)``."""
    z = _generator(seed_seq).standard_normal((size, F.shape[1]))
    x = z @ F.T
    if shift is not None:
        x += shift
    hit = np.all(x > lower, axis=1) & np.all(x < upper, axis=1)
    if shift is None:
        k = int(hit.sum())
        return float(k), float(k), k
    # dP/dQ = exp(-u H + u^2 Var(H) / 2), with u Var(H) = c^T shift
    w = np.exp(-u * (x[hit] @ c) + 0.5 * u * float(c @ shift))
    return float(w.sum()), float((w * w).sum()), int(hit.sum())


def estimate_psi(problem, config=McConfig(), solution=None, workers=None):
    """Estimate ``Psi(u)`` on the nodes of ``problem`` for every ``u`` in the
    config, then fit the log-rate."""
    from .primal import solve_primal

    gram = problem.gram()
    F = _factor(gram)
    n1 = problem.n1
    m = gram.shape[0]
    flags = []
    estimator = config.estimator
    c = None
    if estimator == "tilted":
        sol = solve_primal(problem) if solution is None else solution
        if not sol.optimal:
            flags.append("infeasible: tilting unavailable, crude estimator used")
            estimator = "crude"
        else:
            c = sol.coefficients
    n = config.n_samples
    sizes = [config.block] * (n // config.block)
    if n % config.block:
        sizes.append(n % config.block)
    streams = np.random.SeedSequence(config.seed).spawn(len(config.u))
    out = {k: [] for k in ("psi", "se", "ess", "hits")}
    for u, stream in zip(config.u, streams):
        lower = np.full(m, -np.inf)
        upper = np.full(m, np.inf)
        lower[:n1] = u
        upper[n1:] = problem.r * u
        shift = None if c is None else u * (gram @ c)
        blocks = list(zip(sizes, stream.spawn(len(sizes))))
        sums = pmap(lambda item: _block_sums(F, shift, c, u, lower, upper, *item), blocks, workers)
        s1 = math.fsum(s[0] for s in sums)
        s2 = math.fsum(s[1] for s in sums)
        hits = sum(s[2] for s in sums)
        p = s1 / n
        var = max(s2 / n - p * p, 0.0)
        out["psi"].append(p)
        out["se"].append(math.sqrt(var / n))
        out["ess"].append(s1 * s1 / s2 if s2 > 0 else 0.0)
        out["hits"].append(hits)
        if hits == 0:
            flags.append(f"no hits at u={u:g}")
    u = np.array(config.u)
    psi = np.array(out["psi"])
    return McEstimate(u, psi, np.array(out["se"]), np.array(out["ess"]),
                      np.array(out["hits"]), estimator, fit_rate(u, psi), tuple(flags))


def fit_rate(u, psi, min_points=3):
    """Least-squares slope of ``log Psi`` against ``u^2 / 2``; the slope
    estimates ``-D``."""
    u = np.asarray(u, dtype=float)
    psi = np.asarray(psi, dtype=float)
    ok = psi > 0
    if ok.sum() < min_points:
        return RateFit(math.nan, math.nan, math.nan, (math.nan, math.nan), "not-fitted")
    x = 0.5 * u[ok] ** 2
    y = np.log(psi[ok])
    res = stats.linregress(x, y)
    dev = tuple(float(v) for v in y - (res.intercept + res.slope * x))
    half = 1.96 * res.stderr if np.isfinite(res.stderr) else math.nan
    return RateFit(float(res.slope), float(res.intercept), float(res.stderr),
                   (float(res.slope - half), float(res.slope + half)), "fitted", dev)
