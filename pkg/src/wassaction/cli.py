"""Command-line front end.

Each subcommand reads an optional run document (``--spec``) holding the
problem data (``p``, ``g``, ``V``, ``functional``, ...) next to run inputs
such as ``measure``, ``t``, ``s`` and ``x``. Measures are either explicit
``{"points": ..., "weights": ...}`` objects or ``{"random": {"n": .., "d": ..}}``
recipes drawn with ``--seed``.

JSON is the authoritative output. ``--format csv`` writes a fixed-column
projection with a header row:

    wp               p,distance
    classical-u      x,t,u,grad_norm,iterations
    value            t,value,grad_norm,iterations
    hopf-lax         t,value
    dp-check         t,s,lhs,rhs,residual
    euler-poisson    N,continuity,momentum,optimality,boundary
    viscosity-probe  t,subsolution,young_sup,dp_max,supersolution_limit,slack
    oracle           p,t,x,u

Exit codes: 0 success, 2 invalid input, 3 solver did not converge.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .classical import closed_form_u, minimize_classical
from .ensemble import (closed_form_flow, dp_check_report, minimize_generalized,
                       wasserstein_hopf_lax_result)
from .errors import (DualityDegenerate, NoConvergence, NotOptimal, NotSuperlinear, SolverFailure,
                     ValidationError)
from .eulerpoisson import (boundary_momentum_check, closed_form_evaluator, euler_poisson_residual,
                           optimality_condition_check)
from .fields import p_power, quadratic
from .measure import DiscreteMeasure, random_measure
from .problem import ProblemSpec
from .transport import wasserstein
from .viscosity import (TestCotangent, closed_form_value, default_directions, subsolution_probe,
                        supersolution_probe)

EXIT_OK, EXIT_INVALID, EXIT_NOCONV = 0, 2, 3
SUBCOMMANDS = ("wp", "classical-u", "value", "hopf-lax", "dp-check", "euler-poisson",
               "viscosity-probe", "oracle")


@dataclass
class RunConfig:
    subcommand: str
    spec_path: Optional[str] = None
    out_path: Optional[str] = None
    N: Optional[int] = None  # None: take "N" from the run document, else 200
    tol: float = 1e-8
    maxiter: int = 5000
    seed: int = 0
    fmt: str = "json"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ValidationError(f"unknown subcommand {self.subcommand!r}")
        if self.N is not None and self.N < 2:
            raise ValidationError("--grid must be at least 2")
        if not self.tol > 0:
            raise ValidationError("--tol must be positive")
        if self.maxiter < 1:
            raise ValidationError("--maxiter must be positive")
        if self.fmt not in ("json", "csv"):
            raise ValidationError("--format must be json or csv")


# -- input helpers ------------------------------------------------------------

def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc.msg}") from None


def _measure(obj, rng: np.random.Generator) -> DiscreteMeasure:
    if isinstance(obj, str):
        obj = _load_json(obj)
    if not isinstance(obj, dict):
        raise ValidationError("a measure must be a JSON object")
    if "random" in obj:
        r = obj["random"]
        return random_measure(int(r.get("n", 10)), int(r.get("d", 1)), rng,
                              scale=float(r.get("scale", 1.0)), uniform=bool(r.get("uniform", False)))
    return DiscreteMeasure.from_dict(obj)


def _require(doc: dict, key: str):
    if key not in doc:
        raise ValidationError(f"run document needs {key!r}")
    return doc[key]


def _param(cfg: RunConfig, doc: dict, key: str, default=None):
    """Command-line value, else run-document value, else ``default`` (required if None)."""
    if cfg.extra.get(key) is not None:
        return cfg.extra[key]
    if default is not None:
        return doc.get(key, default)
    return _require(doc, key)


def _closed_form_spec(p: float) -> ProblemSpec:
    return ProblemSpec(p=2.0, V=quadratic(0.5)) if p == 2.0 else ProblemSpec(p=p, V=p_power(p))


# -- subcommands --------------------------------------------------------------

def _cmd_wp(cfg, doc, rng):
    mu = _measure(_param(cfg, doc, "mu"), rng)
    nu = _measure(_param(cfg, doc, "nu"), rng)
    p = float(_param(cfg, doc, "p", 2.0))
    dist, plan = wasserstein(mu, nu, p)
    return {"distance": dist, "plan": plan.to_dict()}, [["p", "distance"], [p, dist]]


def _cmd_classical_u(cfg, doc, rng):
    spec = ProblemSpec.from_dict(doc)
    x = np.atleast_1d(np.asarray(_param(cfg, doc, "x"), dtype=float))
    t = float(_param(cfg, doc, "t"))
    rep = minimize_classical(x, t, spec, cfg.N, tol=cfg.tol, maxiter=cfg.maxiter)
    out = rep.to_dict()
    out["x"] = x.tolist()
    return out, [["x", "t", "u", "grad_norm", "iterations"],
                 [" ".join(repr(float(v)) for v in x), t, rep.value, rep.grad_norm, rep.iterations]]


def _cmd_value(cfg, doc, rng):
    spec = ProblemSpec.from_dict(doc)
    mu = _measure(_require(doc, "measure"), rng)
    t = float(_param(cfg, doc, "t"))
    rep = minimize_generalized(mu, t, spec, cfg.N, tol=cfg.tol, maxiter=cfg.maxiter,
                               method=doc.get("method", "auto"))
    out = rep.to_dict()
    out["measure"] = mu.to_dict()
    return out, [["t", "value", "grad_norm", "iterations"], [t, rep.value, rep.grad_norm, rep.iterations]]


def _cmd_hopf_lax(cfg, doc, rng):
    spec = ProblemSpec.from_dict(doc)
    mu = _measure(_require(doc, "measure"), rng)
    t = float(_param(cfg, doc, "t"))
    res = wasserstein_hopf_lax_result(mu, t, spec.initial_functional(), spec, maxiter=cfg.maxiter)
    out = {"value": res.value, "tau": res.tau.to_dict(), "rounds": res.rounds, "measure": mu.to_dict(), "t": t}
    return out, [["t", "value"], [t, res.value]]


def _cmd_dp_check(cfg, doc, rng):
    spec = ProblemSpec.from_dict(doc)
    mu = _measure(_require(doc, "measure"), rng)
    t = float(_param(cfg, doc, "t"))
    s = float(_param(cfg, doc, "s"))
    rep = dp_check_report(mu, t, s, spec, cfg.N, tol=cfg.tol, maxiter=cfg.maxiter)
    out = {"lhs": rep.lhs, "rhs": rep.rhs, "residual": rep.residual, "s_used": rep.s_used, "t": t,
           "measure": mu.to_dict()}
    return out, [["t", "s", "lhs", "rhs", "residual"], [t, rep.s_used, rep.lhs, rep.rhs, rep.residual]]


def _cmd_euler_poisson(cfg, doc, rng):
    spec = ProblemSpec.from_dict(doc)
    mu = _measure(_require(doc, "measure"), rng)
    t = float(_param(cfg, doc, "t"))
    out = {"t": t, "N": cfg.N, "measure": mu.to_dict()}
    if spec.closed_form_kind() is not None:
        sigma = closed_form_flow(mu, t, cfg.N, spec)
        out["source"] = "closed_form"
        out["optimality"] = optimality_condition_check(sigma, spec, closed_form_evaluator(spec))
    else:
        sigma = minimize_generalized(mu, t, spec, cfg.N, tol=cfg.tol, maxiter=cfg.maxiter).path
        out["source"] = "solver"
        out["optimality"] = None
    rep = euler_poisson_residual(sigma, spec)
    out["residual"] = rep.to_dict()
    out["boundary"] = boundary_momentum_check(sigma, spec)
    return out, [["N", "continuity", "momentum", "optimality", "boundary"],
                 [cfg.N, rep.continuity, rep.momentum, out["optimality"], out["boundary"]]]


def _cmd_viscosity_probe(cfg, doc, rng):
    spec = ProblemSpec.from_dict(doc)
    if spec.closed_form_kind() != "quadratic_p2":
        raise ValidationError("viscosity-probe matches (xi, a) from the p = 2 closed form only")
    mu = _measure(_require(doc, "measure"), rng)
    t = float(_param(cfg, doc, "t"))
    da = float(doc.get("slope_shift", 0.0))
    m2 = float(mu.weights @ np.sum(mu.points**2, axis=1))
    cand = TestCotangent(-math.tan(t) * mu.points, -m2 / (2.0 * math.cos(t) ** 2) + da)
    U = closed_form_value(spec)
    hs = [float(h) for h in doc.get("h", [0.05, 0.025, 0.0125])]
    lam = float(doc.get("lambda", 1.0))
    sub = subsolution_probe(U, mu, t, cand, default_directions(mu, cand, lam, spec.p),
                            [h for h in hs if h < 0.5 * min(t, 1.0 / lam)], spec)
    sup = supersolution_probe(U, mu, t, cand, hs, spec, cfg.N, tol=cfg.tol, maxiter=cfg.maxiter)
    out = {"t": t, "measure": mu.to_dict(), "subsolution": sub.to_dict(), "supersolution": sup.to_dict()}
    return out, [["t", "subsolution", "young_sup", "dp_max", "supersolution_limit", "slack"],
                 [t, sub.closed_form, sub.young_sup, sub.dp_max, sup.limit, sup.slack]]


def _cmd_oracle(cfg, doc, rng):
    p = float(_param(cfg, doc, "p", 2.0))
    spec = _closed_form_spec(p)
    ts = _param(cfg, doc, "t", [0.3, 0.6, 1.0])
    xs = _param(cfg, doc, "x", [1.0])
    ts = [float(v) for v in np.atleast_1d(ts)]
    xs = [float(v) for v in np.atleast_1d(xs)]
    rows = [[p, t, x, float(closed_form_u(np.array([x]), t, spec))] for t in ts for x in xs]
    out = {"p": p, "kind": spec.closed_form_kind(),
           "rows": [{"t": r[1], "x": r[2], "u": r[3]} for r in rows]}
    return out, [["p", "t", "x", "u"]] + rows


COMMANDS = {
    "wp": _cmd_wp, "classical-u": _cmd_classical_u, "value": _cmd_value, "hopf-lax": _cmd_hopf_lax,
    "dp-check": _cmd_dp_check, "euler-poisson": _cmd_euler_poisson,
    "viscosity-probe": _cmd_viscosity_probe, "oracle": _cmd_oracle,
}


def _render(cfg: RunConfig, payload: dict, table: list) -> str:
    if cfg.fmt == "json":
        return json.dumps(payload, sort_keys=True) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in table:
        writer.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def run(cfg: RunConfig) -> int:
    """Execute one subcommand; errors go to stderr as one JSON line."""
    try:
        doc = _load_json(cfg.spec_path) if cfg.spec_path else {}
        if not isinstance(doc, dict):
            raise ValidationError("run document must be a JSON object")
        if cfg.N is None:
            cfg = RunConfig(cfg.subcommand, cfg.spec_path, cfg.out_path, int(doc.get("N", 200)), cfg.tol,
                            cfg.maxiter, cfg.seed, cfg.fmt, cfg.extra)
        rng = np.random.default_rng(cfg.seed)
        payload, table = COMMANDS[cfg.subcommand](cfg, doc, rng)
        text = _render(cfg, payload, table)
    except (ValidationError, NotOptimal, NotSuperlinear, KeyError, TypeError, ValueError) as exc:
        _report(exc)
        return EXIT_INVALID
    except (NoConvergence, SolverFailure, DualityDegenerate) as exc:
        _report(exc)
        return EXIT_NOCONV
    if cfg.out_path:
        with open(cfg.out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _report(exc: Exception):
    msg = str(exc).splitlines()[0] if str(exc) else ""
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "reason": msg}, sort_keys=True) + "\n")


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wassaction", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="run document (JSON)")
    common.add_argument("--out", help="output file; stdout if omitted")
    common.add_argument("--grid", type=int, default=None, help="time intervals N (default 200)")
    common.add_argument("--tol", type=float, default=1e-8, help="optimizer gradient tolerance")
    common.add_argument("--maxiter", type=int, default=5000)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "csv"), default=None)
    common.add_argument("--csv", action="store_true", help="shorthand for --format csv")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name in ("classical-u", "value", "hopf-lax", "dp-check", "euler-poisson", "viscosity-probe"):
            sp.add_argument("--t", type=float)
        if name == "dp-check":
            sp.add_argument("--s", type=float)
        if name == "classical-u":
            sp.add_argument("--x", type=_floats, help="comma-separated point")
        if name == "wp":
            sp.add_argument("--mu", help="measure file")
            sp.add_argument("--nu", help="measure file")
            sp.add_argument("--p", type=float)
        if name == "oracle":
            sp.add_argument("--p", type=float)
            sp.add_argument("--t", type=_floats, help="comma-separated times")
            sp.add_argument("--x", type=_floats, help="comma-separated radii")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    fmt = "csv" if args.csv else (args.format or ("csv" if args.subcommand == "oracle" else "json"))
    extra = {k: v for k, v in vars(args).items()
             if k in ("t", "s", "x", "mu", "nu", "p") and v is not None}
    try:
        cfg = RunConfig(args.subcommand, args.spec, args.out, args.grid, args.tol, args.maxiter,
                        args.seed, fmt, extra)
    except ValidationError as exc:
        _report(exc)
        return EXIT_INVALID
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
