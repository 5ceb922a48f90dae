"""Command-line front end.

Every subcommand reads an optional INI file (``--config``; keys from the
``[run]`` and ``[kernel]`` sections) and command-line flags, with flags
taking precedence.  Results go to ``--output`` (default: stdout) as JSON or
CSV.  Exit codes: 0 success, 2 configuration error, 3 numerical error,
4 convergence error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import _parallel
from .errors import ConvergenceError, DomainError, NumericalError
from .kernels import IndexedCovariance, IsotropicKernel, TabulatedKernel, as_points

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CONVERGENCE = 0, 2, 3, 4


class ConfigError(DomainError):
    """Invalid or missing configuration value."""


# --------------------------------------------------------------------------
# configuration


def _inline_matrix(text):
    rows = [r for r in text.replace("\n", ";").split(";") if r.strip()]
    return np.array([[float(v) for v in r.replace(",", " ").split()] for r in rows])


def parse_points(value, dim=None):
    """Points from a CSV file (one point per row, ``d`` columns) or an
    inline list ``"x,y; x,y"``.  An empty string gives no points."""
    if value is None:
        return None
    text = str(value).strip()
    if not text:
        return as_points([], dim)
    if os.path.exists(text):
        arr = np.loadtxt(text, delimiter=",", ndmin=2, comments="#")
    else:
        try:
            arr = _inline_matrix(text)
        except ValueError as exc:
            raise ConfigError(f"cannot read points {text!r}: not a file or inline list") from exc
    if dim is not None and arr.shape[1] != dim:
        raise ConfigError(f"points {text!r} have {arr.shape[1]} columns, expected {dim}")
    return as_points(arr)


def parse_floats(value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(v) for v in str(value).replace(";", ",").split(",") if v.strip()]


class RunConfig(dict):
    """Flat key-value view of file values overridden by flags."""

    def get_float(self, key, default=None, required=False):
        v = self.get(key)
        if v is None:
            if required:
                raise ConfigError(f"missing required value '{key}'")
            return default
        try:
            return float(v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"'{key}' must be a number, got {v!r}") from exc

    def get_int(self, key, default=None, required=False):
        v = self.get_float(key, default, required)
        if v is None:
            return None
        if v != int(v):
            raise ConfigError(f"'{key}' must be an integer, got {v!r}")
        return int(v)


_KERNEL_KEYS = {"family": "kernel", "scale": "kernel_scale", "variance": "kernel_variance",
                "file": "kernel_file", "path": "kernel_file", "matrix": "kernel_matrix"}


def load_config(args):
    """Merge the config file (if any) with the flags; flags win."""
    cfg = RunConfig()
    if args.config:
        parser = configparser.ConfigParser()
        if not parser.read(args.config):
            raise ConfigError(f"cannot read config file {args.config!r}")
        if parser.has_section("run"):
            cfg.update({k.replace("-", "_"): v for k, v in parser.items("run")})
        if parser.has_section("kernel"):
            for key, value in parser.items("kernel"):
                if key not in _KERNEL_KEYS:
                    raise ConfigError(f"unknown key '{key}' in [kernel]")
                cfg[_KERNEL_KEYS[key]] = value
    for key, value in vars(args).items():
        if key not in ("command", "config") and value is not None:
            cfg[key] = value
    return cfg


def build_kernel(cfg):
    family = str(cfg.get("kernel", "squared-exponential")).lower()
    path = cfg.get("kernel_file") or cfg.get("kernel_path")
    if family == "tabulated":
        if not path:
            raise ConfigError("tabulated kernel needs --kernel-file")
        return TabulatedKernel.from_csv(path)
    if family == "indexed":
        if path:
            matrix = np.loadtxt(path, delimiter=",", ndmin=2)
        elif cfg.get("kernel_matrix"):
            matrix = _inline_matrix(cfg["kernel_matrix"])
        else:
            raise ConfigError("indexed covariance needs --kernel-file or a matrix entry")
        return IndexedCovariance(matrix)
    return IsotropicKernel(family, cfg.get_float("kernel_scale", 1.0), cfg.get_float("kernel_variance", 1.0))


def _pairs(cfg, kernel):
    """Collection of ``(K1, K2)`` pairs: ``pairs = K1 | K2 ; K1 | K2`` with
    whitespace-separated labels/coordinates, or ``k1``/``k2``."""
    dim = 1 if isinstance(kernel, IndexedCovariance) else cfg.get_int("d")
    if cfg.get("pairs"):
        out = []
        for item in str(cfg["pairs"]).split(";"):
            if not item.strip():
                continue
            if "|" not in item:
                raise ConfigError(f"pair {item!r} must have the form 'K1 | K2'")
            left, right = item.split("|", 1)
            out.append((_pair_points(left, dim), _pair_points(right, dim)))
        if not out:
            raise ConfigError("empty pair collection")
        return out
    k1 = parse_points(cfg.get("k1"), dim)
    if k1 is None:
        raise ConfigError("missing K1 (--k1 or pairs)")
    k2 = parse_points(cfg.get("k2", ""), k1.shape[1])
    return [(k1, k2)]


def _pair_points(text, dim):
    text = text.strip()
    if not text:
        return as_points([], dim)
    if os.path.exists(text):
        return parse_points(text, dim)
    vals = [float(v) for v in text.replace(",", " ").split()]
    width = dim or 1
    if len(vals) % width:
        raise ConfigError(f"pair entry {text!r} is not a list of {width}-dimensional points")
    return as_points(np.array(vals).reshape(-1, width))


def _r(cfg):
    r = cfg.get_float("r", required=True)
    if not 0 < r <= 1:
        raise ConfigError(f"'r' must lie in (0, 1], got {r}")
    return r


def _iso_spec(cfg, kernel=None):
    from .isotropic import IsotropicHoleSpec

    kernel = build_kernel(cfg) if kernel is None else kernel
    return IsotropicHoleSpec(kernel, cfg.get_int("d", 2), _r(cfg), cfg.get_float("rho_max", 4.0),
                             n_rho=cfg.get_int("n_rho", 400), n_b=cfg.get_int("n_b", 201))


# --------------------------------------------------------------------------
# output


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    return obj


def dumps_json(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def dumps_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([("%.17g" % v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _emit(text, path):
    if path in (None, "", "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)


# --------------------------------------------------------------------------
# subcommands; each returns (text, validated-only flag)


def cmd_rate(cfg, dry):
    from .primal import HoleProblem, rate_over_collection

    kernel = build_kernel(cfg)
    r = _r(cfg)
    problems = [HoleProblem(kernel, k1, k2, r) for k1, k2 in _pairs(cfg, kernel)]
    if dry:
        return None
    value, idx, sols = rate_over_collection(problems, return_solutions=True)
    if len(sols) == 1:
        return dumps_json({"r": r, **sols[0].to_dict()})
    return dumps_json({
        "r": r, "value": value, "argmin": idx,
        "pairs": [{"value": s.value, "status": s.status, "residuals": s.residuals} for s in sols],
    })


def cmd_dual(cfg, dry):
    from .dual import dual_optimize

    kernel = build_kernel(cfg)
    r = _r(cfg)
    (k1, k2), *rest = _pairs(cfg, kernel)
    if rest:
        raise ConfigError("dual takes a single pair")
    restarts = cfg.get_int("restarts", 8)
    seed = cfg.get_int("seed", 0)
    if dry:
        return None
    res = dual_optimize(kernel, k1, k2, r, restarts=restarts, seed=seed)
    return dumps_json(res.to_dict())


def cmd_isotropic(cfg, dry):
    from .isotropic import radius_profile

    spec = _iso_spec(cfg)
    if dry:
        return None
    prof = radius_profile(spec)
    return dumps_csv(["rho", "R", "D", "H", "W", "branch"],
                     ((float(a), float(b), float(c), float(d), float(e), int(f))
                      for a, b, c, d, e, f in prof.rows()))


def cmd_most_likely_radius(cfg, dry):
    from .isotropic import most_likely_radius

    spec = _iso_spec(cfg)
    if dry:
        return None
    m = most_likely_radius(spec)
    return dumps_json({"r": spec.r, "rho_star": m.rho, "H": m.H, "W": m.W, "branch": m.branch})


def cmd_threshold(cfg, dry):
    from .isotropic import IsotropicHoleSpec, min_int_threshold

    kernel = build_kernel(cfg)
    spec = IsotropicHoleSpec(kernel, cfg.get_int("d", 2), cfg.get_float("r", 0.5),
                             cfg.get_float("rho_max", 4.0), n_b=cfg.get_int("n_b", 201))
    if dry:
        return None
    t = min_int_threshold(spec)
    return dumps_json({"d": spec.d, "kernel": kernel.to_dict(), "threshold": t.rho, "status": t.status})


def cmd_shape(cfg, dry):
    from .shapes import isotropic_shape

    kernel = build_kernel(cfg)
    d = cfg.get_int("d", 2)
    rho = cfg.get_float("rho", required=True)
    r = _r(cfg)
    n = cfg.get_int("nodes")
    if dry:
        return None
    shape = isotropic_shape(kernel, d, rho, r, n)
    s, x = shape.section(rho)
    return dumps_csv(["t1_over_rho", "x_C"], zip(s.astype(float), x.astype(float)))


def cmd_integral_I(cfg, dry):
    from .geometry import I_integral

    d = cfg.get_int("d", required=True)
    eps = parse_floats(cfg.get("eps"))
    if not eps:
        raise ConfigError("missing required value 'eps'")
    if d not in (2, 3) or any(e <= 0 for e in eps):
        raise ConfigError("integral-I needs d in {2, 3} and eps > 0")
    if dry:
        return None
    rows = [dict(zip(("value", "error"), I_integral(d, e, return_error=True)), eps=e) for e in eps]
    if len(rows) == 1:
        return dumps_json({"d": d, **rows[0]})
    return dumps_json({"d": d, "values": rows})


def cmd_anywhere(cfg, dry):
    from .isotropic import anywhere_rate

    spec = _iso_spec(cfg)
    spec.require_unit_variance()
    if dry:
        return None
    res = anywhere_rate(spec, check=not cfg.get("skip_check", False))
    return dumps_json({"value": res.value, "verified": res.verified,
                       "center_value": res.center.value, "center_rho": res.center.rho,
                       "unverified_radii": list(res.failures)})


def cmd_mc_validate(cfg, dry):
    from .montecarlo import McConfig, estimate_psi
    from .primal import HoleProblem, solve_primal

    kernel = build_kernel(cfg)
    r = _r(cfg)
    (k1, k2), *rest = _pairs(cfg, kernel)
    if rest:
        raise ConfigError("mc-validate takes a single pair")
    mc = McConfig(cfg.get_int("n", 1_000_000), tuple(parse_floats(cfg.get("u", "3,4,5"))),
                  cfg.get_int("seed", 0), cfg.get("estimator", "tilted"))
    tol = cfg.get_float("tolerance", 0.15)
    problem = HoleProblem(kernel, k1, k2, r)
    if dry:
        return None
    sol = solve_primal(problem)
    est = estimate_psi(problem, mc, sol)
    D = sol.value
    rel = abs(est.slope + D) / D if math.isfinite(D) and math.isfinite(est.slope) else math.inf
    report = est.to_dict()
    report.update({"predicted_D": D, "relative_error": rel, "tolerance": tol,
                   "verdict": "pass" if rel < tol else "fail", "seed": mc.seed})
    return dumps_json(report)


def _figure_integral():
    from .geometry import I_integral

    rows = []
    for d in (2, 3):
        for eps in np.linspace(0.05, d - 1.0, 40):
            rows.append((d, float(eps), I_integral(d, float(eps))))
    return {"integral.csv": dumps_csv(["d", "eps", "I"], rows)}


def _figure_dh():
    from .isotropic import IsotropicHoleSpec, most_likely_radius

    kernel = IsotropicKernel("squared-exponential")
    spec = IsotropicHoleSpec(kernel, 2, 0.5, 4.0)
    rho = np.linspace(0.0, 4.0, 401)
    D = spec.D(rho)
    from .isotropic import H_rho

    H = H_rho(spec, rho)
    curves = dumps_csv(["rho", "D", "H"], zip(rho.astype(float), np.asarray(D, float), np.asarray(H, float)))
    sweep = []
    for r in np.round(np.arange(0.1, 0.95, 0.05), 10):
        m = most_likely_radius(IsotropicHoleSpec(kernel, 2, float(r), 4.0))
        sweep.append((float(r), m.rho, m.H))
    return {"dh_curves.csv": curves, "dh_rho_star.csv": dumps_csv(["r", "rho_star", "H"], sweep)}


def _figure_shapes():
    from .shapes import isotropic_shape

    kernel = IsotropicKernel("squared-exponential")
    out = {}
    for rho in (1.0, 2.0):
        shape = isotropic_shape(kernel, 2, rho, 0.5)
        s, x = shape.section(rho)
        out[f"shape_rho{rho:g}.csv"] = dumps_csv(["t1_over_rho", "x_C"], zip(s.astype(float), x.astype(float)))
    return out


FIGURES = {"integral": _figure_integral, "dh": _figure_dh, "shapes": _figure_shapes}


def cmd_figures(cfg, dry):
    preset = cfg.get("preset", "all")
    names = list(FIGURES) if preset == "all" else [preset]
    if any(n not in FIGURES for n in names):
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(FIGURES)} or all")
    outdir = cfg.get("output") or "figures"
    if dry:
        return None
    os.makedirs(outdir, exist_ok=True)
    written = []
    for name in names:
        for fname, text in FIGURES[name]().items():
            path = os.path.join(outdir, fname)
            with open(path, "w", newline="\n") as fh:
                fh.write(text)
            written.append(path)
    return dumps_json({"written": written})


COMMANDS = {
    "rate": (cmd_rate, "rate of a pair or of a collection of pairs (primal)"),
    "dual": (cmd_dual, "measure-pair dual with duality gap"),
    "isotropic": (cmd_isotropic, "CSV of R, D, H, W over a radius grid"),
    "most-likely-radius": (cmd_most_likely_radius, "argmax of H over the radius"),
    "threshold": (cmd_threshold, "radius above which the center minimizes g"),
    "shape": (cmd_shape, "CSV section of the limiting shape"),
    "integral-I": (cmd_integral_I, "chord-power sphere integral"),
    "anywhere": (cmd_anywhere, "rate for a hole anywhere in a sphere"),
    "mc-validate": (cmd_mc_validate, "Monte Carlo check of the rate"),
    "figures": (cmd_figures, "figure data presets"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="gaussholes", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", help="INI file with [run] and [kernel] sections")
        s.add_argument("--output", "-o", help="output path (directory for figures)")
        s.add_argument("--dry-run", action="store_true", default=None, help="validate only")
        s.add_argument("--threads", type=int, help="cap on worker threads")
        s.add_argument("--kernel", help="squared-exponential | exponential | tabulated | indexed")
        s.add_argument("--scale", dest="kernel_scale", type=float)
        s.add_argument("--variance", dest="kernel_variance", type=float)
        s.add_argument("--kernel-file", dest="kernel_file", help="tabulated R or covariance matrix CSV")
        s.add_argument("--d", type=int)
        s.add_argument("--r", type=float)
        if name in ("rate", "dual", "mc-validate"):
            s.add_argument("--k1", help="CSV file or inline 'x,y; x,y'")
            s.add_argument("--k2", help="CSV file or inline list; empty for none")
            s.add_argument("--pairs", help="'K1 | K2 ; K1 | K2' collection")
        if name == "dual":
            s.add_argument("--restarts", type=int)
            s.add_argument("--seed", type=int)
        if name in ("isotropic", "most-likely-radius", "threshold", "anywhere"):
            s.add_argument("--rho-max", dest="rho_max", type=float)
            s.add_argument("--n-rho", dest="n_rho", type=int)
            s.add_argument("--n-b", dest="n_b", type=int)
        if name == "anywhere":
            s.add_argument("--skip-check", dest="skip_check", action="store_true", default=None)
        if name == "shape":
            s.add_argument("--rho", type=float)
            s.add_argument("--nodes", type=int)
        if name == "integral-I":
            s.add_argument("--eps", help="one value or a comma-separated list")
        if name == "mc-validate":
            s.add_argument("--u", help="comma-separated levels")
            s.add_argument("--n", type=int, help="samples per level")
            s.add_argument("--seed", type=int)
            s.add_argument("--estimator", choices=("crude", "tilted"))
            s.add_argument("--tolerance", type=float)
        if name == "figures":
            s.add_argument("--preset", choices=sorted(FIGURES) + ["all"])
    return p


def run(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if cfg.get("threads") is not None:
            _parallel.set_threads(cfg.get_int("threads"))
        func = COMMANDS[args.command][0]
        dry = bool(cfg.get("dry_run"))
        text = func(cfg, dry)
        if dry:
            text = dumps_json({"command": args.command, "dry_run": True, "status": "valid"})
            _emit(text, None)
        elif args.command != "figures":
            _emit(text, cfg.get("output"))
        else:
            _emit(text, None)
        return EXIT_OK
    except ConvergenceError as exc:
        print(f"gaussholes {args.command}: convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except NumericalError as exc:
        print(f"gaussholes {args.command}: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DomainError, ValueError, OSError, configparser.Error) as exc:
        print(f"gaussholes {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
