"""Characteristics, Euler-Poisson weak residuals and first-order optimality checks."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import root

from .classical import ParticlePath, closed_form_u
from .ensemble import EnsemblePath
from .errors import DualityDegenerate, NoConvergence, ValidationError
from .fields import power_grad
from .problem import ProblemSpec

FD_STEP = 1e-4
MAX_HALVINGS = 40
CROSSING_DEPTH = 20  # a momentum reversal is accepted once the step is 2^-20 of the base step


def velocity_to_momentum(v, p: float) -> np.ndarray:
    return power_grad(np.asarray(v, dtype=float), p)


def momentum_to_velocity(m, p: float) -> np.ndarray:
    q = p / (p - 1.0)
    return power_grad(np.asarray(m, dtype=float), q)


@dataclass(frozen=True, eq=False)
class Characteristic:
    path: ParticlePath
    momenta: np.ndarray

    def __post_init__(self):
        m = np.array(self.momenta, dtype=float)
        if m.shape != self.path.positions.shape:
            raise ValidationError("one momentum per path node is required")
        m.setflags(write=False)
        object.__setattr__(self, "momenta", m)

    def velocities(self, p: float) -> np.ndarray:
        return momentum_to_velocity(self.momenta, p)

    def to_dict(self) -> dict:
        return {"path": self.path.to_dict(), "momenta": self.momenta.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "Characteristic":
        return cls(ParticlePath.from_dict(data["path"]), np.asarray(data["momenta"], dtype=float))


def _rk4(x, m, h, p, gradV):
    def f(x, m):
        return momentum_to_velocity(m, p), -gradV(x)

    k1x, k1m = f(x, m)
    k2x, k2m = f(x + 0.5 * h * k1x, m + 0.5 * h * k1m)
    k3x, k3m = f(x + 0.5 * h * k2x, m + 0.5 * h * k2m)
    k4x, k4m = f(x + h * k3x, m + h * k3m)
    return (x + h * (k1x + 2 * k2x + 2 * k3x + k4x) / 6.0,
            m + h * (k1m + 2 * k2m + 2 * k3m + k4m) / 6.0)


def _advance(x, m, h, p, gradV, depth=0):
    """One RK4 step; for p != 2 a step that reverses the momentum is halved."""
    x1, m1 = _rk4(x, m, h, p, gradV)
    finite = np.all(np.isfinite(x1)) and np.all(np.isfinite(m1))
    reversed_ = p != 2.0 and float(m @ m1) < 0.0
    if finite and (not reversed_ or depth >= CROSSING_DEPTH):
        return x1, m1
    if depth >= MAX_HALVINGS:
        raise DualityDegenerate("momentum reversal could not be resolved after 40 halvings")
    xm, mm = _advance(x, m, 0.5 * h, p, gradV, depth + 1)
    return _advance(xm, mm, 0.5 * h, p, gradV, depth + 1)


def euler_lagrange_shoot(x0, v0, t: float, spec: ProblemSpec, steps: int = 1000) -> Characteristic:
    """Integrate d/ds (|v|^(p-2) v) = -grad V forward from (x0, v0) in position-momentum form."""
    if steps < 1:
        raise ValidationError("steps must be positive")
    if t < 0:
        raise ValidationError("t must be nonnegative")
    p = spec.p
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    m = velocity_to_momentum(np.atleast_1d(np.asarray(v0, dtype=float)), p)
    if x.shape != m.shape:
        raise ValidationError("x0 and v0 must have the same dimension")
    gradV = spec.V.grad
    h = t / steps
    X = np.empty((steps + 1, x.size))
    M = np.empty_like(X)
    X[0], M[0] = x, m
    for i in range(steps):
        x, m = _advance(x, m, h, p, gradV)
        X[i + 1], M[i + 1] = x, m
    return Characteristic(ParticlePath(0.0, t, X), M)


def solve_characteristic_bvp(x, t: float, spec: ProblemSpec, steps: int = 1000, *,
                             tol: float = 1e-12, y0=None) -> Characteristic:
    """Find y with gamma(0) = y, momentum(0) = grad g(y) and gamma(t) = x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if t < 0 or t >= spec.time_horizon():
        raise ValidationError(f"t={t} must lie in [0, {spec.time_horizon()})")

    def shoot(y):
        v0 = momentum_to_velocity(spec.g.grad(y), spec.p)
        return euler_lagrange_shoot(y, v0, t, spec, steps)

    def miss(y):
        return shoot(y).path.positions[-1] - x

    start = x if y0 is None else np.atleast_1d(np.asarray(y0, dtype=float))
    sol = root(miss, start, method="hybr", tol=tol)
    final = float(np.linalg.norm(miss(sol.x)))
    if not np.isfinite(final) or final > 1e-9 * (1.0 + float(np.linalg.norm(x))):
        raise NoConvergence(f"shooting missed the target by {final:.3e}", miss=final)
    return shoot(sol.x)


# -- test functions -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TestFunction:
    """Monomial x^alpha (about a centre) times a product bump; optionally a vector component."""

    exponents: tuple
    center: np.ndarray = field(repr=False)
    half_width: np.ndarray = field(repr=False)
    component: Optional[int] = None

    __test__ = False  # keep pytest from collecting this class

    @property
    def label(self) -> str:
        mono = "x^" + "".join(str(e) for e in self.exponents)
        return mono if self.component is None else f"{mono}*e{self.component}"

    def _parts(self, X):
        u = (X - self.center) / self.half_width
        inside = np.abs(u) < 1.0
        us = np.where(inside, u, 0.0)
        denom = 1.0 - us**2
        b = np.where(inside, np.exp(1.0 - 1.0 / denom), 0.0)
        db = np.where(inside, b * (-2.0 * us / denom**2) / self.half_width, 0.0)
        return X - self.center, b, db

    def value(self, X) -> np.ndarray:
        y, b, _ = self._parts(np.asarray(X, dtype=float))
        e = np.array(self.exponents)
        return np.prod(y**e, axis=-1) * np.prod(b, axis=-1)

    def grad(self, X) -> np.ndarray:
        y, b, db = self._parts(np.asarray(X, dtype=float))
        e = np.array(self.exponents)
        factors = y**e * b
        # derivative of each one-dimensional factor y_a^e_a b_a
        dmono = np.where(e > 0, e * y ** np.maximum(e - 1, 0), 0.0)
        dfactors = dmono * b + y**e * db
        out = np.empty_like(y)
        for a in range(y.shape[-1]):
            others = np.prod(np.delete(factors, a, axis=-1), axis=-1)
            out[..., a] = dfactors[..., a] * others
        return out


def default_test_functions(sigma: EnsemblePath, degree: int = 3, vector: bool = False) -> list[TestFunction]:
    """Monomials of total degree <= ``degree`` times a bump on twice the bounding box."""
    pts = sigma.positions.reshape(-1, sigma.positions.shape[-1])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center = 0.5 * (lo + hi)
    half = np.maximum(hi - lo, 1e-3)  # twice the box: half-width equals the full side
    d = pts.shape[1]
    exps = [e for e in itertools.product(range(degree + 1), repeat=d) if sum(e) <= degree]
    out = []
    for e in exps:
        if vector:
            out.extend(TestFunction(e, center, half, a) for a in range(d))
        else:
            out.append(TestFunction(e, center, half))
    return out


@dataclass
class EulerPoissonReport:
    continuity: float
    momentum: float
    continuity_by_test: dict
    momentum_by_test: dict

    def __iter__(self):
        return iter((self.continuity, self.momentum))

    def to_dict(self) -> dict:
        return {"continuity": self.continuity, "momentum": self.momentum,
                "continuity_by_test": self.continuity_by_test,
                "momentum_by_test": self.momentum_by_test}


def _centered(A, ds):
    return (A[2:] - A[:-2]) / (2.0 * ds)


def euler_poisson_residual(sigma: EnsemblePath, spec: ProblemSpec,
                           scalar_tests: Optional[Sequence[TestFunction]] = None,
                           vector_tests: Optional[Sequence[TestFunction]] = None) -> EulerPoissonReport:
    """Time-integrated weak residuals of the continuity and momentum equations.

    Node velocities and moment time derivatives use centered differences;
    nodes whose stencil reaches the ends of the grid are left out.
    """
    if sigma.N < 4:
        raise ValidationError("need at least 4 intervals")
    scalar_tests = default_test_functions(sigma) if scalar_tests is None else scalar_tests
    vector_tests = default_test_functions(sigma, vector=True) if vector_tests is None else vector_tests
    X, w, ds, p = sigma.positions, sigma.weights, sigma.step, spec.p
    V = _centered(X, ds)  # node velocities at nodes 1..N-1
    Xi = X[1:-1]
    M = power_grad(V, p)
    gradV = spec.V.grad(Xi)

    cont = {}
    for phi in scalar_tests:
        moment = phi.value(X) @ w
        flux = np.einsum("ikd,ikd->ik", phi.grad(Xi), V) @ w
        r = _centered(moment, ds) - flux
        cont[phi.label] = float(ds * np.sum(np.abs(r)))

    mom = {}
    for phi in vector_tests:
        a = phi.component
        val = phi.value(Xi)
        moment = (val * M[..., a]) @ w
        flux = (np.einsum("ikd,ikd->ik", phi.grad(Xi), V) * M[..., a]) @ w
        force = (val * gradV[..., a]) @ w
        r = _centered(moment, ds) - flux[1:-1] + force[1:-1]
        mom[phi.label] = float(ds * np.sum(np.abs(r)))

    return EulerPoissonReport(max(cont.values(), default=0.0), max(mom.values(), default=0.0), cont, mom)


# -- optimality conditions ----------------------------------------------------

def fd_gradient(u: Callable, x: np.ndarray, s: float, h: float = FD_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for a in range(x.size):
        e = np.zeros_like(x)
        e[a] = h
        g[a] = (u(x + e, s) - u(x - e, s)) / (2.0 * h)
    return g


def closed_form_evaluator(spec: ProblemSpec) -> Callable:
    return lambda x, s: closed_form_u(x, s, spec)


def optimality_condition_check(sigma: EnsemblePath, spec: ProblemSpec, u_evaluator: Callable,
                               h: float = FD_STEP) -> float:
    """max over interior nodes of sum_k w_k | |v_k|^(p-2) v_k - grad u(x_k, s) |.

    ``u_evaluator(x, s)`` returns the classical value; its gradient is taken
    by central differences with step ``h``.
    """
    X, ds = sigma.positions, sigma.step
    M = power_grad(_centered(X, ds), spec.p)
    times = sigma.times
    worst = 0.0
    for i in range(1, sigma.N):
        gu = np.stack([fd_gradient(u_evaluator, x, times[i], h) for x in X[i]])
        err = float(np.linalg.norm(M[i - 1] - gu, axis=1) @ sigma.weights)
        worst = max(worst, err)
    return worst


def boundary_momentum_check(sigma: EnsemblePath, spec: ProblemSpec) -> float:
    """max over particles of | |v_k(0)|^(p-2) v_k(0) - grad g(x_k(0)) |, v(0) one-sided second order."""
    X, ds = sigma.positions, sigma.step
    if sigma.N >= 2:
        v0 = (-3.0 * X[0] + 4.0 * X[1] - X[2]) / (2.0 * ds)
    else:
        v0 = (X[1] - X[0]) / ds
    diff = power_grad(v0, spec.p) - spec.g.grad(X[0])
    return float(np.max(np.linalg.norm(diff, axis=1)))
