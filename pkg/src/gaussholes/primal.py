"""Primal rate computation: minimum-variance feasible linear functionals.

For a pair of finite sets ``(K1, K2)`` and a depth ``r`` the rate is

    D_{K1,K2}(r) = min E H^2   over  H = sum_i c_i X(t_i)
                   s.t.  E X(t) H >= 1 on K1,  E X(t) H <= r on K2.

Only the span of ``{X(t_i)}`` over the constraint nodes matters: the part
of ``H`` orthogonal to it leaves every constraint unchanged and only adds
variance.  Writing ``Sigma = F F^T`` and ``x = F^T c`` turns the problem into
the least-distance program

    min |x|^2   s.t.   s_i F_i x >= h_i

with ``s = +1, h = 1`` on ``K1`` rows and ``s = -1, h = -r`` on ``K2`` rows,
which is solved through one nonnegative least-squares problem
(Lawson & Hanson, ch. 23).  The NNLS residual doubles as a phase-one
feasibility measure: it vanishes exactly when the constraints are
inconsistent, and otherwise ``|residual|^2 = 1 / (1 + D)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from ._parallel import pmap
from .errors import ConvergenceError, DomainError
from .kernels import IndexedCovariance, as_points, check_psd

INFEASIBLE_TOL = 1e-9
# constraint violation of the recovered witness beyond which the problem is
# declared infeasible (rounding can hide exact infeasibility from the LDP)
FEASIBILITY_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class HoleProblem:
    """``X > u`` on ``k1`` and ``X < r u`` on ``k2`` for a covariance ``kernel``."""

    kernel: object
    k1: np.ndarray
    k2: np.ndarray
    r: float

    def __post_init__(self):
        dim = 1 if isinstance(self.kernel, IndexedCovariance) else None
        k1 = as_points(self.k1, dim)
        if k1.shape[0] == 0:
            raise DomainError("K1 must be nonempty")
        k2 = as_points(self.k2, k1.shape[1])
        if not 0 < self.r <= 1:
            raise DomainError(f"depth factor r must lie in (0, 1], got {self.r}")
        object.__setattr__(self, "k1", k1)
        object.__setattr__(self, "k2", k2)
        object.__setattr__(self, "r", float(self.r))

    @property
    def n1(self):
        return self.k1.shape[0]

    @property
    def n2(self):
        return self.k2.shape[0]

    @property
    def nodes(self):
        return np.vstack([self.k1, self.k2])

    def gram(self):
        g = self.kernel.cov(self.nodes)
        return 0.5 * (g + g.T)

    def with_r(self, r):
        return HoleProblem(self.kernel, self.k1, self.k2, r)

    def signs(self):
        return np.concatenate([np.ones(self.n1), -np.ones(self.n2)])

    def bounds(self):
        return np.concatenate([np.ones(self.n1), -self.r * np.ones(self.n2)])


@dataclass(frozen=True, eq=False)
class PrimalSolution:
    value: float
    coefficients: np.ndarray
    status: str
    problem: HoleProblem
    residuals: dict = field(default_factory=dict)
    method: str = "nnls"

    @property
    def optimal(self):
        return self.status == "optimal"

    def witness(self, at):
        """``w_H(t) = E X(t) H = sum_i c_i R(t, t_i)``."""
        return witness_eval(self, at)

    def to_dict(self):
        return {
            "value": self.value,
            "status": self.status,
            "method": self.method,
            "coefficients": self.coefficients.tolist(),
            "residuals": dict(self.residuals),
        }


def _constraint_residuals(problem, profile):
    res = {"k1_min_slack": float(np.min(profile[: problem.n1] - 1.0))}
    if problem.n2:
        res["k2_max_excess"] = float(np.max(profile[problem.n1:] - problem.r))
    return res


def _solve_ldp(factor, signs, bounds):
    """Least-distance program ``min |x|`` s.t. ``diag(signs) F x >= bounds``.

    Returns ``(u, residual)`` of the NNLS problem ``min |E u - f|``,
    ``E = [ (diag(signs) F)^T ; bounds^T ]``, ``f = e_last``.
    """
    m, k = factor.shape
    E = np.vstack([(signs[:, None] * factor).T, bounds[None, :]])
    f = np.zeros(k + 1)
    f[-1] = 1.0
    u, _ = nnls(E, f, maxiter=50 * max(m, 10))
    return u, E @ u - f


def _solve_projected_gradient(gram, signs, bounds, maxiter=200_000, tol=1e-12):
    """Accelerated projected gradient on the bound-constrained dual
    ``min_{lam >= 0} lam^T Q lam / 4 - bounds^T lam``, ``Q = S Sigma S``.

    Primal coefficients are ``c = S lam / 2``.  An unbounded dual (iterates
    running off to infinity) signals primal infeasibility.
    """
    Q = signs[:, None] * gram * signs[None, :]
    L = max(np.linalg.eigvalsh(Q)[-1] / 2.0, 1e-300)
    lam = np.zeros_like(bounds)
    y = lam.copy()
    t = 1.0
    pg = np.inf
    for it in range(maxiter):
        grad = Q @ y / 2.0 - bounds
        new = np.maximum(y - grad / L, 0.0)
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        y = new + ((t - 1) / t_new) * (new - lam)
        # restart momentum when it stops helping
        if (new - lam) @ (Q @ new / 2.0 - bounds) > 0:
            y = new.copy()
            t_new = 1.0
        lam, t = new, t_new
        if not np.all(np.isfinite(lam)) or np.abs(lam).max(initial=0) > 1e15:
            return None, it
        g = Q @ lam / 2.0 - bounds
        pg = np.abs(np.where(lam > 0, g, np.minimum(g, 0.0))).max(initial=0)
        if pg < tol * (1 + np.abs(bounds).max()):
            return signs * lam / 2.0, it
    raise ConvergenceError(
        "projected-gradient primal solver did not converge",
        {"projected_gradient_norm": float(pg), "iterations": maxiter},
    )


def solve_primal(problem, method="nnls", infeasible_tol=INFEASIBLE_TOL):
    """Compute ``D_{K1,K2}(r)`` and the representing coefficients.

    ``method`` is ``"nnls"`` (default; falls back to projected gradient if
    the active-set iteration limit is hit) or ``"projected-gradient"``.
    """
    gram = problem.gram()
    lam, vec = check_psd(gram)
    factor = vec * np.sqrt(np.clip(lam, 0.0, None))
    signs, bounds = problem.signs(), problem.bounds()
    used = method
    coef = None
    if method == "nnls":
        try:
            u, resid = _solve_ldp(factor, signs, bounds)
        except RuntimeError:
            used = "projected-gradient"
        else:
            if np.linalg.norm(resid) <= infeasible_tol:
                return _infeasible(problem, used, float(np.linalg.norm(resid)))
            coef = -signs * u / resid[-1]
    elif method != "projected-gradient":
        raise DomainError(f"unknown primal method {method!r}")
    if coef is None:
        coef, _ = _solve_projected_gradient(gram, signs, bounds)
        if coef is None:
            return _infeasible(problem, used, float("nan"))
    profile = gram @ coef
    value = float(coef @ profile)
    res = _constraint_residuals(problem, profile)
    if -res["k1_min_slack"] > FEASIBILITY_TOL or res.get("k2_max_excess", 0.0) > FEASIBILITY_TOL:
        sol = _infeasible(problem, used, float("nan"))
        sol.residuals.update(res)
        return sol
    return PrimalSolution(value, coef, "optimal", problem, res, used)


def _infeasible(problem, method, phase1):
    coef = np.zeros(problem.n1 + problem.n2)
    return PrimalSolution(math.inf, coef, "infeasible", problem,
                          {"phase1_residual": phase1}, method)


def witness_eval(solution, at):
    """Evaluate the optimal profile ``w_H`` at the points ``at``."""
    prob = solution.problem
    dim = prob.k1.shape[1]
    pts = as_points(at, dim)
    out = prob.kernel.cov(pts, prob.nodes) @ solution.coefficients
    return out if np.ndim(at) > 1 or out.size > 1 else float(out[0])


def rate_over_collection(collection, workers=None, return_solutions=False):
    """``D_C(r) = min over pairs of D_{K1,K2}(r)`` and the argmin index.

    Infeasible pairs count as ``+inf``; ties go to the lowest index.
    Solver errors are re-raised with the offending pair index.
    """
    collection = list(collection)
    if not collection:
        raise DomainError("the pair collection must be nonempty")

    def run(item):
        idx, prob = item
        try:
            return solve_primal(prob)
        except (ConvergenceError, ArithmeticError) as exc:
            raise type(exc)(f"pair {idx}: {exc}") from exc

    sols = pmap(run, enumerate(collection), workers)
    values = np.array([s.value for s in sols])
    best = int(np.argmin(values))
    out = (float(values[best]), best)
    return out + (sols,) if return_solutions else out
