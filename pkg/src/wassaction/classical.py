"""Classical value function u(x, t): path optimization, Hopf-Lax and closed forms."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Union

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline

from .action import DiscreteAction
from .errors import BeyondBlowup, HorizonExceeded, NoConvergence, ValidationError
from .fields import power_grad, power_hess
from .functionals import integral
from .optim import newton_minimize
from .problem import ProblemSpec, conjugate_exponent, t_p

DEFAULT_N = 200
DEFAULT_TOL = 1e-8
DEFAULT_MAXITER = 5000
BLOWUP_THRESHOLD = 1e8


@dataclass(frozen=True, eq=False)
class ParticlePath:
    """Positions on the uniform grid ``t_start + i (t_end - t_start) / N``."""

    t_start: float
    t_end: float
    positions: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        if pos.ndim != 2 or pos.shape[0] < 2:
            raise ValidationError("a path needs at least two nodes")
        if not np.all(np.isfinite(pos)):
            raise ValidationError("path positions must be finite")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def N(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def step(self) -> float:
        return (self.t_end - self.t_start) / self.N

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.N + 1)

    @property
    def velocities(self) -> np.ndarray:
        return np.diff(self.positions, axis=0) / self.step

    def to_dict(self) -> dict:
        return {"t_start": self.t_start, "t_end": self.t_end, "positions": self.positions.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "ParticlePath":
        return cls(float(data["t_start"]), float(data["t_end"]), np.asarray(data["positions"], dtype=float))


@dataclass
class ValueReport:
    value: float
    path: object  # ParticlePath or EnsemblePath
    grad_norm: float
    iterations: int

    def to_dict(self) -> dict:
        out = {"value": self.value, "grad_norm": self.grad_norm, "iterations": self.iterations}
        if isinstance(self.path, ParticlePath):
            out["path"] = self.path.positions.tolist()
            out["t"] = self.path.t_end
        else:
            out.update(self.path.to_dict())
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ValueReport":
        if "paths" in data:
            from .ensemble import EnsemblePath
            path = EnsemblePath.from_dict(data)
        else:
            path = ParticlePath(0.0, float(data["t"]), np.asarray(data["path"], dtype=float))
        return cls(float(data["value"]), path, float(data["grad_norm"]), int(data["iterations"]))


def _check_time(t: float, spec: ProblemSpec):
    if t < 0:
        raise ValidationError("t must be nonnegative")
    T = spec.time_horizon()
    if t >= T:
        raise HorizonExceeded(f"t={t} is not below the horizon {T}")


def classical_action(path: ParticlePath, spec: ProblemSpec) -> float:
    """g(gamma(0)) + sum of ds (|v|^p / p - V(midpoint)) over grid intervals."""
    act = DiscreteAction(path.positions[-1][None], np.ones(1), path.t_end - path.t_start, path.N,
                         spec.p, integral(spec.g), integral(spec.V))
    return act.value_full(path.positions[:, None, :])


def minimize_classical(x, t: float, spec: ProblemSpec, N: int = DEFAULT_N,
                       init: Optional[ParticlePath] = None, *, tol: float = DEFAULT_TOL,
                       maxiter: int = DEFAULT_MAXITER) -> ValueReport:
    """Minimize the discrete action over paths ending at ``x`` at time ``t``.

    All nodes except the terminal one are free, including gamma(0).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    _check_time(t, spec)
    if N < 2:
        raise ValidationError("N must be at least 2")
    if t == 0:
        path = ParticlePath(0.0, 0.0, np.repeat(x[None], N + 1, axis=0))
        return ValueReport(float(spec.g.value(x)), path, 0.0, 0)
    act = DiscreteAction(x[None], np.ones(1), t, N, spec.p, integral(spec.g), integral(spec.V))
    if init is None:
        z0 = act.stationary()
    else:
        if init.N != N or not np.allclose(init.positions[-1], x):
            raise ValidationError("initial path must have N intervals and end at x")
        z0 = act.pack(init.positions[:, None, :])
    res = newton_minimize(act.value, act.grad, act.hess, z0, gtol=tol, maxiter=maxiter)
    if not res.converged:
        raise NoConvergence(f"classical solve stopped at gradient {res.grad_norm:.3e}",
                            grad_norm=res.grad_norm, iterations=res.iterations)
    X = act.full(res.x)
    return ValueReport(float(res.fun), ParticlePath(0.0, t, X[:, 0, :]), res.grad_norm, res.iterations)


def _first_best(values, tol=1e-12):
    best = min(values)
    for i, v in enumerate(values):
        if v <= best + tol * (1.0 + abs(best)):
            return i


def hopf_lax(x, t: float, spec: ProblemSpec, *, tol: float = 1e-10,
             maxiter: int = DEFAULT_MAXITER) -> tuple[float, np.ndarray]:
    """min over y of g(y) + |x - y|^p / (p t^(p-1)) for zero potential.

    Starts are tried in the order (x, x - t |grad g(x)|^(q-2) grad g(x)); among
    numerically equal minima the earliest start wins.
    """
    if not spec.V.is_zero:
        raise ValidationError("hopf_lax requires a zero potential")
    if t <= 0:
        raise ValidationError("t must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p, g = spec.p, spec.g
    c = t ** (p - 1.0)

    def fun(y):
        return float(g.value(y) + np.linalg.norm(x - y) ** p / (p * c))

    def grad(y):
        return g.grad(y) + power_grad(y - x, p) / c

    def hess(y):
        return g.hess(y) + power_hess(y - x, p) / c

    starts = [x, x - t * power_grad(g.grad(x), spec.q)]
    results = []
    for y0 in starts:
        res = newton_minimize(fun, grad, hess, y0, gtol=tol, maxiter=maxiter)
        if res.converged:
            results.append(res)
    if not results:
        raise NoConvergence("no Hopf-Lax start converged")
    k = _first_best([r.fun for r in results])
    return results[k].fun, results[k].x


# -- the a(t) profile -------------------------------------------------------

def _a_rhs(a: float, p: float, q: float) -> float:
    return -(p - 1.0) * abs(a) ** q - 1.0


@dataclass
class AODESolution:
    times: np.ndarray
    a: np.ndarray
    blowup_time: float  # first grid time with |a| > 1e8, inf if not reached
    step: float


def solve_a_ode(p: float, t_max: float, steps: int) -> AODESolution:
    """Classical fourth-order Runge-Kutta for a' + (p-1)|a|^q + 1 = 0, a(0) = 0.

    Integration stops at the first grid time where |a| exceeds 1e8.
    """
    if p <= 1:
        raise ValidationError("p must exceed 1")
    q = conjugate_exponent(p)
    h = t_max / steps
    a = np.empty(steps + 1)
    a[0] = 0.0
    cur = 0.0
    blowup = math.inf
    last = steps
    for i in range(steps):
        k1 = _a_rhs(cur, p, q)
        k2 = _a_rhs(cur + 0.5 * h * k1, p, q)
        k3 = _a_rhs(cur + 0.5 * h * k2, p, q)
        k4 = _a_rhs(cur + h * k3, p, q)
        cur = cur + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        a[i + 1] = cur
        if not math.isfinite(cur) or abs(cur) > BLOWUP_THRESHOLD:
            blowup = (i + 1) * h
            last = i + 1
            break
    return AODESolution(np.arange(last + 1) * h, a[: last + 1], blowup, h)


_PROFILE_STEP = 1e-4


@lru_cache(maxsize=64)
def _a_profile(p: float, t_cap: float) -> CubicHermiteSpline:
    steps = max(1, int(math.ceil(t_cap / _PROFILE_STEP)))
    sol = solve_a_ode(p, t_cap, steps)
    q = conjugate_exponent(p)
    slopes = np.array([_a_rhs(a, p, q) for a in sol.a])
    return CubicHermiteSpline(sol.times, sol.a, slopes)


def a_of_t(p: float, t) -> np.ndarray:
    """a(t) from the Runge-Kutta profile with cubic Hermite interpolation."""
    T = t_p(p)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr >= T):
        raise BeyondBlowup(f"t must lie in [0, {T})")
    cap = min(math.ceil(float(np.max(t_arr)) / 0.05 + 1) * 0.05, 0.999 * T)
    cap = max(cap, float(np.max(t_arr)))
    out = _a_profile(float(p), round(cap, 12))(t_arr)
    return float(out) if np.ndim(t) == 0 else out


def _closed_kind(spec: ProblemSpec) -> str:
    kind = spec.closed_form_kind()
    if kind is None:
        raise ValidationError("closed forms need g = 0 and V = |x|^2/2 (p = 2) or |x|^p/p")
    return kind


def _check_blowup(t, spec):
    T = t_p(spec.p)
    if np.any(np.asarray(t) >= T) or np.any(np.asarray(t) < 0):
        raise BeyondBlowup(f"t must lie in [0, {T})")


def closed_form_u(x, t: float, spec: ProblemSpec):
    """-tan(t)|x|^2/2 (p = 2) or a(t)|x|^p/p. Accepts one point or a batch."""
    kind = _closed_kind(spec)
    _check_blowup(t, spec)
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(np.atleast_1d(x), axis=-1)
    if kind == "quadratic_p2":
        out = -math.tan(t) * r**2 / 2.0
    else:
        out = a_of_t(spec.p, t) * r**spec.p / spec.p
    return float(out) if np.ndim(out) == 0 else out


def closed_form_grad_u(x, t: float, spec: ProblemSpec) -> np.ndarray:
    kind = _closed_kind(spec)
    _check_blowup(t, spec)
    x = np.asarray(x, dtype=float)
    if kind == "quadratic_p2":
        return -math.tan(t) * x
    return a_of_t(spec.p, t) * power_grad(x, spec.p)


def t_p_estimate(p: float, steps: int = 100_000, t_max: Optional[float] = None) -> AODESolution:
    return solve_a_ode(p, t_max if t_max is not None else 1.5 * t_p(p), steps)


def flow_map(x, t: float, s: float, spec: ProblemSpec) -> np.ndarray:
    """Position at time s of the minimizing trajectory ending at x at time t."""
    kind = _closed_kind(spec)
    _check_blowup(t, spec)
    if not 0 <= s <= t:
        raise ValidationError("need 0 <= s <= t")
    x = np.asarray(x, dtype=float)
    if kind == "quadratic_p2":
        return math.cos(s) / math.cos(t) * x
    return flow_factor(spec.p, t, s) * x


def flow_factor(p: float, t: float, s: float) -> float:
    """exp of the integral of |a|^(1/(p-1)) over [s, t].

    The substitution b = |a| turns the time integral into a quadrature with
    a smooth-enough integrand, avoiding the t^(1/(p-1)) kink at t = 0.
    """
    if s == t:
        return 1.0
    q = conjugate_exponent(p)
    lo, hi = abs(a_of_t(p, s)), abs(a_of_t(p, t))
    val, _ = quad(lambda b: b ** (1.0 / (p - 1.0)) / (1.0 + (p - 1.0) * b**q), lo, hi,
                  epsabs=1e-14, epsrel=1e-13, limit=200)
    return math.exp(val)
