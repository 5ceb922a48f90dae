"""Dual rate computation over pairs of probability measures.

For measures ``mu1`` on ``K1`` and ``mu2`` on ``K2`` write

    a = <<R>>_{mu1,mu1},   b = <<R>>_{mu1,mu2},   c = <<R>>_{mu2,mu2},
    A = a c - b^2,          B = r^2 a - 2 r b + c.

Then

    1 / D_{K1,K2}(r) = min[ min_{mu1} a ,  min_{b >= r a} A / B ].

``A / B = a - (r a - b)^2 / B``, so on the constraint boundary ``b = r a``
the ratio meets ``a`` with matching first derivatives.  The optimizer below
minimizes the C^1 objective ``phi = a - ((b - r a)_+)^2 / B``, which equals
``A / B`` where the constraint holds and ``a`` elsewhere; its minimum over
all measure pairs is the bracket above.  That keeps the constraint exact
without a penalty schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ._parallel import pmap
from .errors import ConvergenceError, DomainError
from .geometry import DiscreteMeasure
from .kernels import as_points

CS_TOL = 1e-10
COND1_SLACK = 1e-12
FIRST_ORDER_TOL = 1e-8
NEC_COND_TOL = 1e-6


# --------------------------------------------------------------------------
# closed-form pieces


@dataclass(frozen=True)
class AbcCoefficients:
    a: float
    b: float
    c: float

    def __post_init__(self):
        if self.a < -CS_TOL or self.c < -CS_TOL:
            raise DomainError(f"a and c must be nonnegative, got a={self.a}, c={self.c}")

    @property
    def cauchy_schwarz_gap(self):
        """``a c - b^2`` (nonnegative up to rounding)."""
        return self.a * self.c - self.b * self.b

    def A(self):
        return self.a * self.c - self.b ** 2

    def B(self, r):
        return r * r * self.a - 2 * r * self.b + self.c


@dataclass(frozen=True)
class DualCandidate:
    mu1: DiscreteMeasure
    mu2: DiscreteMeasure


def abc_coefficients(kernel, mu1, mu2):
    """The three kernel energies of a measure pair."""
    if mu1.dim != mu2.dim:
        raise DomainError("measures live in different dimensions")
    a = float(mu1.weights @ kernel.cov(mu1.points) @ mu1.weights)
    b = float(mu1.weights @ kernel.cov(mu1.points, mu2.points) @ mu2.weights)
    c = float(mu2.weights @ kernel.cov(mu2.points) @ mu2.weights)
    return AbcCoefficients(a, b, c)


def ab_functionals(kernel, cand, r):
    """Return ``(A, B, abc)`` for a candidate pair of measures."""
    abc = abc_coefficients(kernel, cand.mu1, cand.mu2)
    return abc.A(), abc.B(r), abc


def cond1_holds(kernel, cand, r, slack=COND1_SLACK):
    """``b >= r a`` (the constraint of the fractional problem)."""
    abc = abc_coefficients(kernel, cand.mu1, cand.mu2)
    return abc.b >= r * abc.a - slack


@dataclass(frozen=True)
class SepSolution:
    value: float
    m1: float
    m2: float
    branch: int
    degenerate: bool = False


def sep_solve(a, b, c, r):
    """``max m1 - r m2`` over ``m1, m2 >= 0`` with ``a m1^2 - 2 b m1 m2 + c m2^2 <= 1``.

    Branch 1 (``b <= r a``): ``m2 = 0`` and the value is ``a^{-1/2}``.
    Branch 2: value ``sqrt((c + r^2 a - 2 r b) / (a c - b^2))`` with
    ``m1 / m2 = (r b - c) / (r a - b)``; the constraint is active.
    Degenerate instances (``a = 0``, or ``a c = b^2`` on branch 2) return
    ``+inf`` with ``degenerate=True``.
    """
    if a < 0 or c < 0 or not 0 < r <= 1:
        raise DomainError("sep_solve needs a, c >= 0 and 0 < r <= 1")
    if b * b > a * c + CS_TOL * max(1.0, a * c):
        raise DomainError(f"b^2 <= ac violated: b={b}, a={a}, c={c}")
    if b <= r * a:
        if a <= 0:
            return SepSolution(math.inf, math.inf, 0.0, 1, True)
        return SepSolution(a ** -0.5, a ** -0.5, 0.0, 1)
    det = a * c - b * b
    num = c + r * r * a - 2 * r * b
    if det <= 0:
        return SepSolution(math.inf, math.inf, math.inf, 2, True)
    ratio = (r * b - c) / (r * a - b)
    quad = a * ratio * ratio - 2 * b * ratio + c
    m2 = 1.0 / math.sqrt(quad)
    return SepSolution(math.sqrt(num / det), ratio * m2, m2, 2)


def dual_value(kernel, cand, r):
    """Energy bracket at one candidate: ``min(a, A/B)`` when ``b >= r a``,
    ``a`` otherwise.  Its reciprocal is a lower bound on ``D_{K1,K2}(r)``.
    ``B = 0`` on the constrained branch gives ``+inf`` for that branch."""
    A, B, abc = ab_functionals(kernel, cand, r)
    if abc.b >= r * abc.a - COND1_SLACK:
        ratio = A / B if B > 0 else math.inf
        return min(abc.a, ratio)
    return abc.a


# --------------------------------------------------------------------------
# simplex machinery


def project_simplex(v):
    """Euclidean projection onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    cond = u - css / ind > 0
    k = ind[cond][-1]
    theta = css[cond][-1] / k
    return np.maximum(v - theta, 0.0)


def _spg(fun_grad, x0, project, maxiter=3000, tol=1e-12, memory=8):
    """Spectral projected gradient with a nonmonotone Armijo search
    (Birgin, Martinez & Raydan).  Returns ``(x, f, iterations)``."""
    x = project(x0)
    f, g = fun_grad(x)
    hist = [f]
    pgn = np.abs(project(x - g) - x).max()
    alpha = 1.0 / max(pgn, 1e-12)
    for it in range(maxiter):
        if pgn <= tol:
            return x, f, it
        d = project(x - alpha * g) - x
        gd = float(g @ d)
        if gd >= 0:
            return x, f, it
        fref = max(hist[-memory:])
        step = 1.0
        while True:
            xn = x + step * d
            fn, gn = fun_grad(xn)
            if fn <= fref + 1e-4 * step * gd:
                break
            step *= 0.5
            if step < 1e-16:
                return x, f, it
        s = xn - x
        y = gn - g
        sy = float(s @ y)
        alpha = min(max(float(s @ s) / sy, 1e-12), 1e12) if sy > 0 else 1e12
        x, f, g = xn, fn, gn
        hist.append(f)
        pgn = np.abs(project(x - g) - x).max()
    return x, f, maxiter


class _Energies:
    """Vectorized energies and gradients on the product simplex."""

    def __init__(self, G11, G12, G22, r):
        self.G11, self.G12, self.G22, self.r = G11, G12, G22, r
        self.n1 = G11.shape[0]

    def split(self, x):
        return x[: self.n1], x[self.n1:]

    def project(self, x):
        return np.concatenate([project_simplex(x[: self.n1]), project_simplex(x[self.n1:])])

    def parts(self, x):
        m1, m2 = self.split(x)
        g11 = self.G11 @ m1
        g12 = self.G12 @ m2
        g21 = self.G12.T @ m1
        g22 = self.G22 @ m2
        a, b, c = m1 @ g11, m1 @ g12, m2 @ g22
        return a, b, c, (g11, g12, g21, g22)

    def phi(self, x):
        a, b, c, _ = self.parts(x)
        s = max(b - self.r * a, 0.0)
        B = self.r ** 2 * a - 2 * self.r * b + c
        return a - (s * s / B if s > 0 else 0.0), a, b, c

    def dinkelbach_objective(self, lam):
        r = self.r

        def fg(x):
            a, b, c, (g11, g12, g21, g22) = self.parts(x)
            B = r * r * a - 2 * r * b + c
            s = max(b - r * a, 0.0)
            da = np.concatenate([2 * g11, np.zeros_like(g22)])
            db = np.concatenate([g12, g21])
            dc = np.concatenate([np.zeros_like(g11), 2 * g22])
            dB = r * r * da - 2 * r * db + dc
            f = (a - lam) * B - s * s
            grad = B * da + (a - lam) * dB
            if s > 0:
                grad = grad - 2 * s * (db - r * da)
            return f, grad

        return fg

    def cond1_margin(self):
        r = self.r

        def fg(x):
            a, b, c, (g11, g12, g21, g22) = self.parts(x)
            da = np.concatenate([2 * g11, np.zeros_like(g22)])
            db = np.concatenate([g12, g21])
            return -(b - r * a), -(db - r * da)

        return fg


# --------------------------------------------------------------------------
# optimization


@dataclass(eq=False)
class DualResult:
    first_min: float
    second_min: float
    D: float
    first_measure: DiscreteMeasure
    second_measures: DualCandidate | None
    gap_vs_primal: float | None = None
    primal_value: float | None = None
    restarts: list = field(default_factory=list)

    @property
    def governing(self):
        """1 if the first minimum governs the rate, else 2."""
        return 1 if self.first_min <= self.second_min else 2

    def to_dict(self):
        out = {
            "first_min": self.first_min,
            "second_min": self.second_min,
            "D": self.D,
            "gap_vs_primal": self.gap_vs_primal,
            "primal_value": self.primal_value,
            "measures": {"mu1_first": self.first_measure.weights.tolist()},
        }
        if self.second_measures is not None:
            out["measures"]["mu1_second"] = self.second_measures.mu1.weights.tolist()
            out["measures"]["mu2_second"] = self.second_measures.mu2.weights.tolist()
        return out


def minimize_energy(gram, x0=None, tol=1e-13, maxiter=20000):
    """``min mu^T G mu`` over the simplex.  Returns ``(value, weights)``."""
    n = gram.shape[0]
    x0 = np.full(n, 1.0 / n) if x0 is None else x0

    def fg(x):
        gx = gram @ x
        return float(x @ gx), 2 * gx

    x, f, _ = _spg(fg, x0, project_simplex, maxiter=maxiter, tol=tol)
    return f, x


def _inner_minimize(energies, fg, x, inner, maxiter):
    """Minimize ``fg`` over the product of simplices starting at ``x``."""
    if inner == "spg":
        return _spg(fg, x, energies.project, maxiter=maxiter, tol=1e-13)[0]
    n1, n = energies.n1, x.size
    # SLSQP's ftol is absolute; rescale so that it acts relative to the
    # gradient size at the start point
    scale = max(np.abs(fg(x)[1]).max(), 1e-300)

    def scaled(z):
        f, g = fg(z)
        return f / scale, g / scale

    eq = np.zeros((2, n))
    eq[0, :n1] = 1.0
    eq[1, n1:] = 1.0
    cons = [{"type": "eq", "fun": lambda z: eq @ z - 1.0, "jac": lambda z: eq}]
    res = minimize(scaled, x, jac=True, method="SLSQP", bounds=[(0.0, 1.0)] * n,
                   constraints=cons, options={"ftol": 1e-14, "maxiter": maxiter})
    return energies.project(res.x)


def _dinkelbach(energies, x0, max_outer, lam_tol, inner_maxiter, inner="slsqp"):
    """One Dinkelbach run from ``x0``.  Returns a dict describing the run."""
    x = energies.project(x0)
    a, b, c, _ = energies.parts(x)
    r = energies.r
    if b <= r * a:
        x, _, _ = _spg(energies.cond1_margin(), x, energies.project, maxiter=500, tol=1e-12)
        a, b, c, _ = energies.parts(x)
        if b <= r * a:
            return {"status": "no-feasible-start", "value": math.inf, "x": x, "outer": 0}
    lam = energies.phi(x)[0]
    for outer in range(1, max_outer + 1):
        x_new = _inner_minimize(energies, energies.dinkelbach_objective(lam), x,
                                inner, inner_maxiter)
        lam_new = energies.phi(x_new)[0]
        if lam_new < lam:
            x = x_new
        if lam - lam_new <= lam_tol * max(1.0, abs(lam)):
            lam = min(lam, lam_new)
            return {"status": "converged", "value": float(lam), "x": x, "outer": outer}
        lam = lam_new
    raise ConvergenceError("Dinkelbach iteration did not converge",
                           {"last_value": lam, "last_iterate": x.tolist(), "outer": max_outer})


def dual_optimize(kernel, k1, k2, r, restarts=8, seed=0, max_outer=200, lam_tol=1e-10,
                  inner="slsqp", inner_maxiter=1000, compare_primal=True, workers=None):
    """Evaluate the measure-pair dual of ``D_{K1,K2}(r)`` on finite sets.

    The first minimum is a convex quadratic program on the simplex.  The
    constrained fractional minimum is found by Dinkelbach iterations whose
    subproblems are solved on the product of simplices, either by SQP
    (``inner="slsqp"``, which copes with the near-singular Gram matrices
    of smooth kernels) or by spectral projected gradient (``"spg"``).  The
    fractional problem is not jointly convex, so several
    starts are used (start 0 is a point mass on ``K2`` placed where
    ``b - r a`` is largest, the rest are Dirichlet draws from independent
    seeds).  With ``compare_primal`` the relative gap to
    :func:`gaussholes.primal.solve_primal` is reported; that gap, not the
    local optimizer, is the certificate of global optimality.
    """
    if not 0 < r <= 1:
        raise DomainError(f"depth factor r must lie in (0, 1], got {r}")
    k1 = as_points(k1)
    k2 = as_points(k2, k1.shape[1])
    G11 = kernel.cov(k1)
    first, w1 = minimize_energy(G11)
    first_measure = DiscreteMeasure.normalized(k1, w1)
    second = math.inf
    cand = None
    runs = []
    if k2.shape[0]:
        energies = _Energies(G11, kernel.cov(k1, k2), kernel.cov(k2), r)
        n1, n2 = k1.shape[0], k2.shape[0]
        seeds = np.random.SeedSequence(seed).spawn(max(restarts, 1))

        def start(i):
            if i == 0:
                m2 = np.zeros(n2)
                m2[int(np.argmax(energies.G12.T @ w1))] = 1.0
                return np.concatenate([w1, m2])
            rng = np.random.default_rng(seeds[i])
            return np.concatenate([rng.dirichlet(np.ones(n1)), rng.dirichlet(np.ones(n2))])

        def run(i):
            try:
                out = _dinkelbach(energies, start(i), max_outer, lam_tol, inner_maxiter, inner)
            except ConvergenceError as exc:
                out = {"status": "not-converged", "value": exc.info["last_value"],
                       "x": np.asarray(exc.info["last_iterate"]), "outer": max_outer}
            out["start"] = i
            return out

        runs = pmap(run, range(max(restarts, 1)), workers)
        if all(o["status"] == "not-converged" for o in runs):
            raise ConvergenceError("no Dinkelbach restart converged",
                                   {"last_values": [o["value"] for o in runs]})
        best = None
        for o in runs:
            if not np.isfinite(o["value"]):
                continue
            val, a, b, c = energies.phi(o["x"])
            if b > r * a and (best is None or val < best[0]):
                best = (val, o)
        if best is not None:
            second = best[0]
            m1, m2 = energies.split(best[1]["x"])
            cand = DualCandidate(DiscreteMeasure.normalized(k1, m1),
                                 DiscreteMeasure.normalized(k2, m2))
    lowest = min(first, second)
    D = 1.0 / lowest if lowest > 0 else math.inf
    res = DualResult(first, second, D, first_measure, cand,
                     restarts=[{k: v for k, v in o.items() if k != "x"} for o in runs])
    if compare_primal:
        from .primal import HoleProblem, solve_primal

        sol = solve_primal(HoleProblem(kernel, k1, k2, r))
        res.primal_value = sol.value
        if np.isfinite(sol.value) and np.isfinite(D):
            res.gap_vs_primal = abs(D - sol.value) / sol.value
        elif not np.isfinite(sol.value) and not np.isfinite(D):
            res.gap_vs_primal = 0.0
        else:
            res.gap_vs_primal = math.inf
    return res


# --------------------------------------------------------------------------
# optimality checks


def check_first_order(kernel, mu, nodes=None, tol=FIRST_ORDER_TOL):
    """Optimality test for ``min_mu <<R>>_{mu,mu}`` on a finite set.

    ``mu`` is optimal iff its energy equals ``min_t int R(s, t) mu(ds)``
    over the nodes ``t`` of ``K1`` (default: the atoms of ``mu``).  Returns
    ``(is_optimal, slack)`` with ``slack = potential - energy`` per node.
    """
    nodes = mu.points if nodes is None else as_points(nodes, mu.dim)
    pot = mu.potential(kernel, nodes)
    energy = float(mu.weights @ mu.potential(kernel, mu.points))
    slack = pot - energy
    return bool(slack.min() >= -tol), slack


@dataclass(frozen=True, eq=False)
class NecCondReport:
    passes: bool
    status: str
    violation: np.ndarray


def _conditioned_kernels(kernel, pts, hole, r):
    G = kernel.cov(pts)
    gb = kernel.cov(pts, hole)[:, 0]
    Rbb = float(kernel.cov(hole)[0, 0])
    R1 = G * Rbb - np.outer(gb, gb)
    R2 = r * r * G - r * (gb[:, None] + gb[None, :]) + Rbb
    return G, gb, R1, R2


def check_nec_cond2(kernel, mu, hole, r, nodes=None, tol=NEC_COND_TOL):
    """Necessary condition for ``mu`` to minimize the single-hole ratio
    ``<<R1>>_mu / <<R2>>_mu`` with ``K2 = {hole}``:

        (R1 mu)(t) <<R2>> >= (R2 mu)(t) <<R1>>   for every node t,
        with equality on the support of mu,

    where ``R1`` is ``R(b,b)`` times the covariance conditioned on
    ``X(b)`` and ``R2`` is the covariance of ``r X(t) - X(b)``.

    ``violation`` is ``lhs - rhs`` per node.  Status is ``"inconclusive"``
    when the hypotheses fail (constraint ``b >= r a`` not strict, or
    ``<<R2>> <= 0``).
    """
    hole = as_points(np.atleast_1d(hole), mu.dim).reshape(1, -1)
    nodes = mu.points if nodes is None else as_points(nodes, mu.dim)
    w = mu.weights
    allpts = np.vstack([mu.points, nodes])
    G, gb, R1, R2 = _conditioned_kernels(kernel, allpts, hole, r)
    k = w.size
    a = float(w @ G[:k, :k] @ w)
    if not float(gb[:k] @ w) > r * a:
        return NecCondReport(False, "inconclusive", np.zeros(nodes.shape[0]))
    e1 = float(w @ R1[:k, :k] @ w)
    e2 = float(w @ R2[:k, :k] @ w)
    if e2 <= 0:
        return NecCondReport(False, "inconclusive", np.zeros(nodes.shape[0]))
    lhs = (w @ R1[:k, k:]) * e2
    rhs = (w @ R2[:k, k:]) * e1
    viol = lhs - rhs
    ok_ineq = viol.min() >= -tol
    supp_lhs = (w @ R1[:k, :k]) * e2 - (w @ R2[:k, :k]) * e1
    ok_eq = np.all(np.abs(supp_lhs[w > 1e-12]) <= tol)
    passes = bool(ok_ineq and ok_eq)
    return NecCondReport(passes, "passes" if passes else "fails", viol)
