"""Generalized value function U(mu, t) on discrete measures."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .action import DiscreteAction
from .classical import (DEFAULT_MAXITER, DEFAULT_N, DEFAULT_TOL, ParticlePath, ValueReport,
                        _first_best, closed_form_u, flow_map, minimize_classical)
from .errors import HorizonExceeded, NoConvergence, ValidationError
from .fields import power_grad, power_hess
from .functionals import FunctionalValue, evaluate_functional, integral
from .lagrangian import as_lagrangian
from .measure import DiscreteMeasure
from .optim import newton_minimize
from .problem import ProblemSpec, horizon  # noqa: F401  (re-exported)
from .transport import optimal_plan, wasserstein_distance


@dataclass(frozen=True, eq=False)
class EnsemblePath:
    """Weighted particle paths on the shared grid ``s_i = i t / N``.

    ``positions`` has shape ``(N + 1, n, d)``.
    """

    weights: np.ndarray
    positions: np.ndarray
    t: float

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        w = np.array(self.weights, dtype=float)
        if pos.ndim != 3 or pos.shape[0] < 2:
            raise ValidationError("ensemble positions must have shape (N+1, n, d) with N >= 1")
        if pos.shape[1] != w.shape[0]:
            raise ValidationError("one weight per particle is required")
        DiscreteMeasure(pos[-1], w)  # validates the weights
        pos.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)

    @property
    def N(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    @property
    def step(self) -> float:
        return self.t / self.N

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t, self.N + 1)

    @property
    def velocities(self) -> np.ndarray:
        """Forward-difference velocities, shape ``(N, n, d)``."""
        return np.diff(self.positions, axis=0) / self.step

    @property
    def paths(self) -> list[ParticlePath]:
        return [ParticlePath(0.0, self.t, self.positions[:, k, :]) for k in range(self.n)]

    def snapshot(self, i: int) -> DiscreteMeasure:
        return DiscreteMeasure(self.positions[i], self.weights)

    def to_dict(self) -> dict:
        return {"t": self.t, "weights": self.weights.tolist(),
                "paths": np.transpose(self.positions, (1, 0, 2)).tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "EnsemblePath":
        pos = np.transpose(np.asarray(data["paths"], dtype=float), (1, 0, 2))
        return cls(np.asarray(data["weights"], dtype=float), pos, float(data["t"]))

    @classmethod
    def from_paths(cls, weights, paths: list[ParticlePath]) -> "EnsemblePath":
        return cls(np.asarray(weights, dtype=float), np.stack([p.positions for p in paths], axis=1),
                   paths[0].t_end - paths[0].t_start)

    @classmethod
    def stationary(cls, mu: DiscreteMeasure, t: float, N: int) -> "EnsemblePath":
        return cls(mu.weights, np.repeat(mu.points[None], N + 1, axis=0), t)


def closed_form_flow(mu: DiscreteMeasure, t: float, N: int, spec: ProblemSpec) -> EnsemblePath:
    """Push ``mu`` back along the explicit flow map on an N-interval grid."""
    times = np.linspace(0.0, t, N + 1)
    pos = np.stack([np.stack([flow_map(x, t, s, spec) for x in mu.points]) for s in times])
    return EnsemblePath(mu.weights, pos, t)


def _action(sigma: EnsemblePath, spec: ProblemSpec) -> DiscreteAction:
    return DiscreteAction(sigma.positions[-1], sigma.weights, sigma.t, sigma.N, spec.p,
                          spec.initial_functional(), spec.potential_functional())


def ensemble_action(sigma: EnsemblePath, spec: ProblemSpec) -> float:
    """G(sigma(0)) + sum over intervals of ds (sum_k w_k |v_k|^p / p - V(midpoint snapshot))."""
    return _action(sigma, spec).value_full(sigma.positions)


def tail_action(sigma: EnsemblePath, spec: ProblemSpec, start: int) -> float:
    """Kinetic-minus-potential action over intervals ``start .. N-1``."""
    return float(np.sum(_action(sigma, spec).interval_terms(sigma.positions)[start:]))


def _check_time(t: float, spec: ProblemSpec):
    if t < 0:
        raise ValidationError("t must be nonnegative")
    T = spec.time_horizon()
    if t >= T:
        raise HorizonExceeded(f"t={t} is not below the horizon {T}")


def _decoupled(spec: ProblemSpec) -> bool:
    return spec.functional == "integral"


def minimize_generalized(mu: DiscreteMeasure, t: float, spec: ProblemSpec, N: int = DEFAULT_N, *,
                         method: str = "auto", tol: float = DEFAULT_TOL,
                         maxiter: int = DEFAULT_MAXITER, workers: Optional[int] = None) -> ValueReport:
    """Minimize the ensemble action with terminal snapshot ``mu``.

    ``method="auto"`` splits integral-kind problems into one classical solve
    per particle (on ``workers`` threads if given, summed in index order);
    ``"joint"`` always optimizes all particles together. The reported
    ``grad_norm`` is per unit weight.
    """
    _check_time(t, spec)
    if N < 2:
        raise ValidationError("N must be at least 2")
    if method not in ("auto", "joint", "decoupled"):
        raise ValidationError(f"unknown method {method!r}")
    if t == 0:
        sigma = EnsemblePath.stationary(mu, 0.0, N)
        return ValueReport(evaluate_functional(spec.initial_functional(), mu), sigma, 0.0, 0)
    if method == "decoupled" and not _decoupled(spec):
        raise ValidationError("only integral-kind problems decouple")
    if method != "joint" and _decoupled(spec):
        def solve(x):
            return minimize_classical(x, t, spec, N, tol=tol, maxiter=maxiter)

        if workers and workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                reports = list(pool.map(solve, mu.points))
        else:
            reports = [solve(x) for x in mu.points]
        sigma = EnsemblePath.from_paths(mu.weights, [r.path for r in reports])
        value = float(sum(w * r.value for w, r in zip(mu.weights, reports)))
        return ValueReport(value, sigma, max(r.grad_norm for r in reports),
                           sum(r.iterations for r in reports))
    act = DiscreteAction(mu.points, mu.weights, t, N, spec.p,
                         spec.initial_functional(), spec.potential_functional())
    res = newton_minimize(act.value, act.grad, act.hess, act.stationary(), gtol=tol,
                          maxiter=maxiter, scale=act.grad_scale())
    if not res.converged:
        raise NoConvergence(f"joint solve stopped at gradient {res.grad_norm:.3e}",
                            grad_norm=res.grad_norm, iterations=res.iterations)
    sigma = EnsemblePath(mu.weights, act.full(res.x), t)
    return ValueReport(float(res.fun), sigma, res.grad_norm, res.iterations)


def reduce_linear(mu: DiscreteMeasure, t: float, spec: ProblemSpec, N: int = DEFAULT_N) -> float:
    """Integral of the classical value u(., t) against mu."""
    if spec.functional != "integral":
        raise ValidationError("reduce_linear needs integral-kind functionals")
    _check_time(t, spec)
    if spec.closed_form_kind() is not None:
        return float(mu.weights @ closed_form_u(mu.points, t, spec))
    vals = [minimize_classical(x, t, spec, N).value for x in mu.points]
    return float(mu.weights @ np.array(vals))


# -- Hopf-Lax type formulas --------------------------------------------------

@dataclass
class HopfLaxResult:
    value: float
    tau: DiscreteMeasure
    rounds: int


def _hopf_lax_search(mu: DiscreteMeasure, G: FunctionalValue, starts, inner, max_rounds=50):
    """Alternate an optimal-plan update with a fixed-plan minimization over points.

    With the plan fixed the objective is an upper bound that touches the
    true objective at the current points, so each round cannot increase it.
    """
    results = []
    for Y0 in starts:
        Y = np.array(Y0, dtype=float)
        best = math.inf
        for rounds in range(1, max_rounds + 1):
            tau = DiscreteMeasure(Y, mu.weights)
            mass = optimal_plan(mu, tau, inner.p).mass
            Y_new, val = inner(mass, Y)
            if val >= best - 1e-13 * (1.0 + abs(best)):
                if val < best:
                    Y, best = Y_new, val
                break
            Y, best = Y_new, val
        tau = DiscreteMeasure(Y, mu.weights)
        results.append(HopfLaxResult(inner.true_value(tau), tau, rounds))
    k = _first_best([r.value for r in results])
    return results[k]


class _PowerInner:
    """Fixed-plan subproblem for the power cost W^p / (p t^(p-1))."""

    def __init__(self, mu, t, G, p, tol, maxiter):
        self.mu, self.G, self.p, self.tol, self.maxiter = mu, G, p, tol, maxiter
        self.c = p * t ** (p - 1.0)

    def true_value(self, tau):
        w = wasserstein_distance(self.mu, tau, self.p)
        return evaluate_functional(self.G, tau) + w**self.p / self.c

    def __call__(self, mass, Y0):
        mu, G, p, c = self.mu, self.G, self.p, self.c
        X, w = mu.points, mu.weights
        shape = Y0.shape

        def fun(z):
            Y = z.reshape(shape)
            diff = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2) ** p
            return G.value(Y, w) + np.sum(mass * diff) / c

        def grad(z):
            Y = z.reshape(shape)
            pg = power_grad(Y[None, :, :] - X[:, None, :], p)
            return (G.grad(Y, w) + p * np.einsum("ij,ijd->jd", mass, pg) / c).ravel()

        def hess(z):
            Y = z.reshape(shape)
            n, d = shape
            ph = p * np.einsum("ij,ijab->jab", mass, power_hess(Y[None, :, :] - X[:, None, :], p)) / c
            HG = G.hessian(Y, w)
            H = np.zeros((n, d, n, d))
            if HG.ndim == 3:
                for k in range(n):
                    H[k, :, k, :] = HG[k]
            else:
                H += HG
            for k in range(n):
                H[k, :, k, :] += ph[k]
            return H.reshape(n * d, n * d)

        res = newton_minimize(fun, grad, hess, Y0.ravel(), gtol=self.tol, maxiter=self.maxiter,
                              scale=np.repeat(w, shape[1]))
        if not res.converged:
            raise NoConvergence("Hopf-Lax inner solve did not converge", grad_norm=res.grad_norm)
        return res.x.reshape(shape), res.fun


def _heuristic_start(mu, t, G, q):
    # move each particle against the dual of its per-unit-mass gradient
    grad = G.grad(mu.points, mu.weights) / mu.weights[:, None]
    return mu.points - t * power_grad(grad, q)


def wasserstein_hopf_lax(mu: DiscreteMeasure, t: float, G: FunctionalValue, spec: ProblemSpec, *,
                         tol: float = 1e-11, maxiter: int = DEFAULT_MAXITER) -> float:
    """inf over tau of G(tau) + W_p(mu, tau)^p / (p t^(p-1)).

    Candidates tau share mu's weights and have free support points.
    """
    return wasserstein_hopf_lax_result(mu, t, G, spec, tol=tol, maxiter=maxiter).value


def wasserstein_hopf_lax_result(mu, t, G, spec, *, tol=1e-11, maxiter=DEFAULT_MAXITER) -> HopfLaxResult:
    if not spec.potential_functional().is_zero:
        raise ValidationError("the Hopf-Lax formula needs a zero potential")
    if t < 0:
        raise ValidationError("t must be nonnegative")
    if t == 0:
        return HopfLaxResult(evaluate_functional(G, mu), mu, 0)
    inner = _PowerInner(mu, t, G, spec.p, tol, maxiter)
    starts = [mu.points, _heuristic_start(mu, t, G, spec.q)]
    return _hopf_lax_search(mu, G, starts, inner)


class _LagrangianInner:
    """Fixed-plan subproblem for the cost t ell(W / t); solved by BFGS."""

    def __init__(self, mu, t, G, ell, p, tol):
        self.mu, self.t, self.G, self.ell, self.p, self.tol = mu, t, G, ell, p, tol

    def true_value(self, tau):
        w = wasserstein_distance(self.mu, tau, self.p)
        return evaluate_functional(self.G, tau) + self.t * self.ell(w / self.t)

    def __call__(self, mass, Y0):
        mu, G, p, t, ell = self.mu, self.G, self.p, self.t, self.ell
        X, w = mu.points, mu.weights
        shape = Y0.shape

        def fg(z):
            Y = z.reshape(shape)
            diff = Y[None, :, :] - X[:, None, :]
            cost = float(np.sum(mass * np.linalg.norm(diff, axis=2) ** p))
            W = cost ** (1.0 / p)
            val = G.value(Y, w) + t * ell(W / t)
            g = G.grad(Y, w)
            if W > 0:
                dW = W ** (1.0 - p) * np.einsum("ij,ijd->jd", mass, power_grad(diff, p))
                g = g + ell.derivative(W / t) * dW
            return val, g.ravel()

        res = minimize(fg, Y0.ravel(), jac=True, method="BFGS",
                       options={"gtol": self.tol, "maxiter": 10_000})
        val, g = fg(res.x)
        gnorm = float(np.max(np.abs(g / np.repeat(w, shape[1]))))
        if gnorm > 1e-6:
            raise NoConvergence(f"modified Hopf-Lax inner solve stopped at gradient {gnorm:.2e}",
                                grad_norm=gnorm)
        return res.x.reshape(shape), val


def modified_hopf_lax(mu: DiscreteMeasure, t: float, G: FunctionalValue, ell,
                      p: float = 2.0, *, tol: float = 1e-10) -> float:
    """inf over tau of G(tau) + t ell(W_p(mu, tau) / t)."""
    return modified_hopf_lax_result(mu, t, G, ell, p, tol=tol).value


def modified_hopf_lax_result(mu, t, G, ell, p=2.0, *, tol=1e-10) -> HopfLaxResult:
    if t < 0:
        raise ValidationError("t must be nonnegative")
    if t == 0:
        return HopfLaxResult(evaluate_functional(G, mu), mu, 0)
    ell = as_lagrangian(ell)
    inner = _LagrangianInner(mu, t, G, ell, p, tol)
    # translate along the negative mean gradient by the speed that balances ell'
    gbar = G.grad(mu.points, mu.weights).sum(axis=0)
    starts = [mu.points]
    norm = float(np.linalg.norm(gbar))
    if norm > 0:
        speed = ell.inverse_deriv(norm)
        starts.append(mu.points - t * speed * gbar / norm)
    return _hopf_lax_search(mu, G, starts, inner)


# -- dynamic programming, horizon, Poincare ----------------------------------

@dataclass
class DPReport:
    lhs: float
    rhs: float
    residual: float
    s_used: float


def dp_check_report(mu: DiscreteMeasure, t: float, s: float, spec: ProblemSpec, N: int = DEFAULT_N,
                    **solver) -> DPReport:
    if not 0 < s < t:
        raise ValidationError("need 0 < s < t")
    full = minimize_generalized(mu, t, spec, N, **solver)
    sigma = full.path
    j = int(round(N * s / t))
    j = min(max(j, 1), N - 1)
    s_used = j * t / N
    nu = sigma.snapshot(j)
    head = minimize_generalized(nu, s_used, spec, j, **solver)
    rhs = head.value + tail_action(sigma, spec, j)
    return DPReport(full.value, rhs, rhs - full.value, s_used)


def dp_check(mu: DiscreteMeasure, t: float, s: float, spec: ProblemSpec, N: int = DEFAULT_N,
             **solver) -> float:
    """U(nu, s) + tail action - U(mu, t), where nu is the optimal snapshot at s.

    The split point snaps to the nearest grid node so both solves share a step.
    """
    return dp_check_report(mu, t, s, spec, N, **solver).residual


def poincare_constant(p: float) -> float:
    return p ** (-1.0 / p)


def kinetic_speed(sigma: EnsemblePath, p: float) -> np.ndarray:
    """Per-interval (sum_k w_k |v_k|^p)^(1/p): the particle bound on the metric derivative."""
    speeds = np.linalg.norm(sigma.velocities, axis=2)
    return (speeds**p @ sigma.weights) ** (1.0 / p)


def metric_derivative_estimate(sigma: EnsemblePath, p: float) -> np.ndarray:
    """W_p between consecutive snapshots divided by the step."""
    return np.array([wasserstein_distance(sigma.snapshot(i), sigma.snapshot(i + 1), p)
                     for i in range(sigma.N)]) / sigma.step


def poincare_check(sigma: EnsemblePath, p: float) -> tuple[float, float]:
    """Both sides of the Poincare inequality on the grid.

    The left side integrates W_p(sigma(s), sigma(T))^p by the trapezoid rule;
    the right side uses the kinetic speed bound per interval.
    """
    end = sigma.snapshot(sigma.N)
    dist = np.array([wasserstein_distance(sigma.snapshot(i), end, p) for i in range(sigma.N)] + [0.0])
    vals = dist**p
    lhs = (sigma.step * (vals.sum() - 0.5 * (vals[0] + vals[-1]))) ** (1.0 / p)
    rhs = poincare_constant(p) * sigma.t * (sigma.step * np.sum(kinetic_speed(sigma, p) ** p)) ** (1.0 / p)
    return float(lhs), float(rhs)
