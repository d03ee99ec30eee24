"""Exact p-Wasserstein distances and optimal couplings between discrete measures.

The transport problem is solved as a linear program with the HiGHS dual
simplex, which returns a vertex of the transport polytope; the brute-force
permutation solver is kept separate as an independent check.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import DimensionMismatch, NonUniform, NotOptimal, SolverFailure, TooLarge, ValidationError
from .measure import DiscreteMeasure

MARGINAL_TOL = 1e-9
_LP_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Coupling matrix between ``source`` (rows) and ``target`` (columns).

    ``certified`` is set only by solvers that proved optimality; it gates
    :func:`displacement_interpolate`.
    """

    source: DiscreteMeasure
    target: DiscreteMeasure
    mass: np.ndarray
    cost_exponent: float
    certified: bool = False

    def __post_init__(self):
        mass = np.array(self.mass, dtype=float)
        if mass.shape != (self.source.n, self.target.n):
            raise ValidationError(f"mass has shape {mass.shape}, expected {(self.source.n, self.target.n)}")
        if np.any(mass < 0):
            raise ValidationError("plan has negative entries")
        if np.max(np.abs(mass.sum(axis=1) - self.source.weights)) > MARGINAL_TOL:
            raise ValidationError("row sums do not match source weights")
        if np.max(np.abs(mass.sum(axis=0) - self.target.weights)) > MARGINAL_TOL:
            raise ValidationError("column sums do not match target weights")
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    @property
    def p(self) -> float:
        return self.cost_exponent

    def cost(self) -> float:
        """Sum of mass_ij |x_i - y_j|^p."""
        return float(np.sum(self.mass * cost_matrix(self.source, self.target, self.p)))

    def to_dict(self) -> dict:
        return {
            "mass": self.mass.tolist(),
            "p": self.p,
            "source": self.source.to_dict(),
            "target": self.target.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TransportPlan":
        return cls(DiscreteMeasure.from_dict(data["source"]), DiscreteMeasure.from_dict(data["target"]),
                   np.asarray(data["mass"], dtype=float), float(data["p"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def cost_matrix(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> np.ndarray:
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"dimensions {mu.dim} and {nu.dim} differ")
    diff = mu.points[:, None, :] - nu.points[None, :, :]
    return np.linalg.norm(diff, axis=2) ** p


def _solve_lp(a: np.ndarray, b: np.ndarray, C: np.ndarray) -> np.ndarray:
    n, m = C.shape
    if n == 1 or m == 1:
        # the product coupling is the only feasible plan
        return np.outer(a, b)
    rows = sparse.kron(sparse.eye(n), np.ones((1, m)))
    cols = sparse.kron(np.ones((1, n)), sparse.eye(m))
    A_eq = sparse.vstack([rows, cols]).tocsr()
    b_eq = np.concatenate([a, b])
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs-ds",
                  options=_LP_OPTIONS)
    if res.status != 0:
        raise SolverFailure(f"transport LP failed: {res.message}")
    mass = np.clip(res.x.reshape(n, m), 0.0, None)
    return mass


def optimal_plan(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> TransportPlan:
    C = cost_matrix(mu, nu, p)
    mass = _solve_lp(mu.weights, nu.weights, C)
    return TransportPlan(mu, nu, mass, float(p), certified=True)


def wasserstein(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> tuple[float, TransportPlan]:
    """W_p(mu, nu) together with an optimal plan."""
    plan = optimal_plan(mu, nu, p)
    return max(plan.cost(), 0.0) ** (1.0 / p), plan


def wasserstein_distance(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> float:
    return wasserstein(mu, nu, p)[0]


def brute_force_wasserstein(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> float:
    """Minimum over all permutation couplings of two uniform n-point measures.

    By Birkhoff's theorem this is the exact W_p for uniform weights.
    """
    n = mu.n
    if nu.n != n:
        raise ValidationError("brute force requires equal particle counts")
    if n > 8:
        raise TooLarge(f"n={n} exceeds 8")
    for m in (mu, nu):
        if np.max(np.abs(m.weights - 1.0 / n)) > 1e-12:
            raise NonUniform("brute force requires uniform weights")
    C = cost_matrix(mu, nu, p)
    best = math.inf
    idx = np.arange(n)
    for perm in itertools.permutations(range(n)):
        best = min(best, float(C[idx, perm].sum()))
    return (best / n) ** (1.0 / p)


def is_optimal_plan(plan: TransportPlan, tol: float = 1e-9) -> bool:
    """True iff the plan's cost is within ``tol`` of the optimal LP cost."""
    best = optimal_plan(plan.source, plan.target, plan.p).cost()
    return plan.cost() <= best + tol


def certify(plan: TransportPlan, tol: float = 1e-9) -> TransportPlan:
    """Return a certified copy of ``plan`` or raise :class:`NotOptimal`."""
    if not is_optimal_plan(plan, tol):
        raise NotOptimal("plan cost exceeds the optimal transport cost")
    return TransportPlan(plan.source, plan.target, plan.mass, plan.p, certified=True)


def displacement_interpolate(plan: TransportPlan, s: float) -> DiscreteMeasure:
    """Point on the constant-speed geodesic carried by an optimal plan.

    One particle ``(1-s) x_i + s y_j`` per nonzero plan entry; coincident
    particles are not merged.
    """
    if not plan.certified:
        raise NotOptimal("displacement interpolation needs a certified optimal plan")
    if not 0.0 <= s <= 1.0:
        raise ValidationError(f"s={s} outside [0, 1]")
    i, j = np.nonzero(plan.mass > 0)
    pts = (1.0 - s) * plan.source.points[i] + s * plan.target.points[j]
    w = plan.mass[i, j]
    return DiscreteMeasure(pts, w / w.sum())
