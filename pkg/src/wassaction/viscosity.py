"""Numerical probes of the viscosity inequalities for the Wasserstein HJE.

A value evaluator is any callable ``U(mu, t) -> float``. Probes report
measured quantities over finite direction families and h-sequences; they
never assert that a limit exists.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import minimize_scalar

from .classical import a_of_t, closed_form_u
from .ensemble import minimize_generalized, modified_hopf_lax, tail_action
from .errors import NotOptimal, NotSuperlinear, ValidationError
from .fields import power_grad
from .functionals import FunctionalValue, evaluate_functional
from .lagrangian import as_lagrangian
from .measure import DiscreteMeasure
from .problem import ProblemSpec, conjugate_exponent
from .transport import TransportPlan, is_optimal_plan, optimal_plan, wasserstein_distance

CERT_TOL = 1e-9
A_FD_STEP = 1e-5


@dataclass(frozen=True, eq=False)
class TestCotangent:
    """Cotangent sample ``xi`` on the support of mu_0 and a time slope ``a``."""

    xi: np.ndarray
    a: float

    __test__ = False

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float)
        if xi.ndim == 1:
            xi = xi[:, None]
        if not np.all(np.isfinite(xi)):
            raise ValidationError("xi must be finite on the support")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)

    @classmethod
    def from_map(cls, mu0: DiscreteMeasure, fn: Callable, a: float) -> "TestCotangent":
        return cls(np.stack([np.atleast_1d(fn(x)) for x in mu0.points]), a)

    def norm_q(self, mu0: DiscreteMeasure, q: float) -> float:
        """(sum_k w_k |xi(x_k)|^q)^(1/q)."""
        return float(np.linalg.norm(self.xi, axis=1) ** q @ mu0.weights) ** (1.0 / q)

    def shifted(self, da: float) -> "TestCotangent":
        return TestCotangent(self.xi, self.a + da)


@dataclass(frozen=True, eq=False)
class TangentDirection:
    """v = lam (r - id) on the support of mu_0, with r given by its images."""

    mu0: DiscreteMeasure
    r: np.ndarray
    lam: float
    certified_optimal: bool
    label: str = ""

    @property
    def v(self) -> np.ndarray:
        return self.lam * (self.r - self.mu0.points)

    def moved(self, h: float) -> DiscreteMeasure:
        """(id + h v)_# mu_0, particle by particle."""
        return DiscreteMeasure(self.mu0.points + h * self.v, self.mu0.weights)


def make_tangent_direction(mu0: DiscreteMeasure, r, lam: float, p: float, *, strict: bool = False,
                           label: str = "") -> TangentDirection:
    """Build v = lam (r - id) and certify that (id x r)_# mu_0 is an optimal plan."""
    if not lam > 0:
        raise ValidationError("lambda must be positive")
    images = np.stack([np.atleast_1d(r(x)) for x in mu0.points]) if callable(r) else np.asarray(r, float)
    if images.shape != mu0.points.shape:
        raise ValidationError("r must map each support point to a point of the same dimension")
    target = DiscreteMeasure(images, mu0.weights)
    plan = TransportPlan(mu0, target, np.diag(mu0.weights), p)
    ok = is_optimal_plan(plan, CERT_TOL)
    if strict and not ok:
        raise NotOptimal("(id x r)_# mu_0 is not an optimal plan")
    return TangentDirection(mu0, images, float(lam), bool(ok), label)


# -- direction families -------------------------------------------------------

def translation_directions(mu0, shifts, lam, p):
    out = []
    for c in shifts:
        c = np.atleast_1d(np.asarray(c, dtype=float))
        label = "translate(" + ",".join(f"{x:g}" for x in c) + ")"
        out.append(make_tangent_direction(mu0, mu0.points + c, lam, p, label=label))
    return out


def dilation_directions(mu0, eps_values, lam, p):
    return [make_tangent_direction(mu0, (1.0 + e) * mu0.points, lam, p, label=f"dilate({e:g})")
            for e in eps_values]


def duality_directions(mu0, cand: TestCotangent, lam, p):
    """v = -|xi|^(q-2) xi (the Young-saturating direction) and its negative."""
    q = conjugate_exponent(p)
    base = power_grad(cand.xi, q)
    return [make_tangent_direction(mu0, mu0.points + sign * base / lam, lam, p,
                                   label="duality(-)" if sign < 0 else "duality(+)")
            for sign in (-1.0, 1.0)]


def default_directions(mu0, cand, lam, p):
    d = mu0.dim
    shifts = [s * np.eye(d)[a] for a in range(d) for s in (-0.5, 0.5)]
    return (translation_directions(mu0, shifts, lam, p) + dilation_directions(mu0, (-0.2, 0.2), lam, p)
            + duality_directions(mu0, cand, lam, p))


# -- value evaluators ---------------------------------------------------------

def closed_form_value(spec: ProblemSpec) -> Callable:
    return lambda mu, t: float(mu.weights @ closed_form_u(mu.points, t, spec))


def solver_value(spec: ProblemSpec, N: int = 200, **solver) -> Callable:
    return lambda mu, t: minimize_generalized(mu, t, spec, N, **solver).value


def _closed_form_lhs(cand, mu0, spec):
    q = spec.q
    return cand.a + cand.norm_q(mu0, q) ** q / q + evaluate_functional(spec.potential_functional(), mu0)


def _segment_potential(direction, h, spec, panels=8):
    """Simpson rule for the integral of V(sigma(s)) over [t0 - h, t0], sigma(t0 - u) = (id + u v)_# mu_0."""
    Vf = spec.potential_functional()
    u = np.linspace(0.0, h, panels + 1)
    vals = [evaluate_functional(Vf, direction.moved(ui)) for ui in u]
    return float(simpson(vals, x=u))


@dataclass
class DirectionReport:
    label: str
    certified: bool
    young_value: float  # a - int xi.v - |v|^p/p + V(mu_0)
    dp_quotients: list
    hs: list

    def to_dict(self):
        return {"label": self.label, "certified": self.certified, "young_value": self.young_value,
                "dp_quotients": self.dp_quotients, "hs": self.hs}


@dataclass
class SubsolutionReport:
    closed_form: float  # a + |xi|_q^q / q + V(mu_0): must be <= tol
    directions: list
    young_sup: float
    dp_max: float

    @property
    def violation(self) -> float:
        return max(self.closed_form, self.young_sup, self.dp_max)

    def to_dict(self):
        return {"closed_form": self.closed_form, "young_sup": self.young_sup, "dp_max": self.dp_max,
                "directions": [d.to_dict() for d in self.directions]}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def subsolution_probe(U: Callable, mu0: DiscreteMeasure, t0: float, cand: TestCotangent,
                      directions: Sequence[TangentDirection], h, spec: ProblemSpec) -> SubsolutionReport:
    """Closed-form subsolution inequality plus, per direction, its Young form and DP quotients.

    The DP quotient for step h is
    [U(mu_0, t0) - U((id + h v)_# mu_0, t0 - h) - h |v|^p/p + int V(sigma)] / h,
    which is <= 0 whenever U satisfies dynamic programming.
    """
    hs = [float(x) for x in np.atleast_1d(h)]
    p = spec.p
    Vf = spec.potential_functional()
    V0 = evaluate_functional(Vf, mu0)
    U0 = U(mu0, t0)
    reports = []
    for dirn in directions:
        if not dirn.certified_optimal:
            raise NotOptimal(f"direction {dirn.label or '?'} is not certified")
        window = 0.5 * min(t0, 1.0 / dirn.lam)
        for hh in hs:
            if not 0 < hh < window:
                raise ValidationError(f"h={hh} outside the geodesic window (0, {window})")
        v = dirn.v
        kin = float(np.linalg.norm(v, axis=1) ** p @ mu0.weights) / p
        pair = float(np.einsum("kd,kd->k", cand.xi, v) @ mu0.weights)
        young = cand.a - pair - kin + V0
        quotients = []
        for hh in hs:
            rhs = U(dirn.moved(hh), t0 - hh) + hh * kin - _segment_potential(dirn, hh, spec)
            quotients.append((U0 - rhs) / hh)
        reports.append(DirectionReport(dirn.label, True, young, quotients, hs))
    return SubsolutionReport(_closed_form_lhs(cand, mu0, spec), reports,
                             max((r.young_value for r in reports), default=-math.inf),
                             max((max(r.dp_quotients) for r in reports), default=-math.inf))


@dataclass
class SupersolutionReport:
    closed_form: float  # a + |xi|_q^q / q + V(mu_0): must be >= lower bound
    lower_bounds: list
    limit: float
    ratios: list
    hs: list
    deltas: list

    @property
    def slack(self) -> float:
        """closed_form - limit; negative values are violations."""
        return self.closed_form - self.limit

    def to_dict(self):
        return {"closed_form": self.closed_form, "lower_bounds": self.lower_bounds, "limit": self.limit,
                "ratios": self.ratios, "hs": self.hs, "deltas": self.deltas, "slack": self.slack}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def supersolution_probe(U: Optional[Callable], mu0: DiscreteMeasure, t0: float, cand: TestCotangent,
                        h_sequence: Sequence[float], spec: ProblemSpec, N: int = 400,
                        **solver) -> SupersolutionReport:
    """Per-h lower bounds for a + |xi|_q^q / q + V(mu_0) from a minimizing ensemble.

    For each h the optimal ensemble sigma for U(mu_0, t0) is cut at t0 - h
    (snapped to the grid) and the bound
        (1/h)[int xi(x).(y - x) dpi_h + tail kinetic] + |xi|_q^q / q - avg tail V + V(mu_0)
    is formed with pi_h an optimal plan from mu_0 to sigma(t0 - h). The limit
    is the Richardson extrapolation of the last two bounds.
    """
    p, q = spec.p, spec.q
    rep = minimize_generalized(mu0, t0, spec, N, **solver)
    sigma = rep.path
    Vf = spec.potential_functional()
    V0 = evaluate_functional(Vf, mu0)
    nq = cand.norm_q(mu0, q) ** q / q
    U0 = U(mu0, t0) if U is not None else rep.value
    X = sigma.positions
    mids = 0.5 * (X[1:] + X[:-1])
    Vmid = np.array([evaluate_functional(Vf, DiscreteMeasure(m, sigma.weights)) for m in mids])
    bounds, ratios, hs, deltas = [], [], [], []
    for h in h_sequence:
        if not 0 < h < t0:
            raise ValidationError(f"h={h} must lie in (0, t0)")
        j = int(round(N * (t0 - h) / t0))
        j = min(max(j, 0), N - 1)
        h_used = t0 - j * sigma.step
        snap = sigma.snapshot(j)
        plan = optimal_plan(mu0, snap, p)
        disp = snap.points[None, :, :] - mu0.points[:, None, :]
        pair = float(np.sum(plan.mass * np.einsum("id,ijd->ij", cand.xi, disp)))
        tail = tail_action(sigma, spec, j)
        tailV = sigma.step * float(np.sum(Vmid[j:]))
        kin = tail + tailV
        bounds.append((pair + kin) / h_used + nq - tailV / h_used + V0)
        ratios.append(wasserstein_distance(snap, mu0, p) / h_used)
        hs.append(h_used)
        deltas.append((rep.value - U0) / h_used)
    if len(bounds) >= 2:
        h1, h2 = hs[-2], hs[-1]
        limit = (h1 * bounds[-1] - h2 * bounds[-2]) / (h1 - h2)
    else:
        limit = bounds[-1]
    return SupersolutionReport(_closed_form_lhs(cand, mu0, spec), bounds, float(limit), ratios, hs, deltas)


def hje_residual_wasserstein(spec: ProblemSpec, mu: DiscreteMeasure, t: float) -> float:
    """|d_t U + |grad u|_q^q / q + V(mu)| for U = int u(., t) dmu on closed-form data."""
    kind = spec.closed_form_kind()
    if kind is None:
        raise ValidationError("hje_residual_wasserstein needs closed-form data")
    p, q = spec.p, spec.q
    X, w = mu.points, mu.weights
    r = np.linalg.norm(X, axis=1)
    if kind == "quadratic_p2":
        grad = -math.tan(t) * X
        dU = -(1.0 / math.cos(t) ** 2) * float(w @ r**2) / 2.0
    else:
        a = a_of_t(p, t)
        lo = max(t - A_FD_STEP, 0.0)
        adot = (a_of_t(p, t + A_FD_STEP) - a_of_t(p, lo)) / (t + A_FD_STEP - lo)
        grad = a * power_grad(X, p)
        dU = adot * float(w @ r**p) / p
    ham = float(np.linalg.norm(grad, axis=1) ** q @ w) / q
    return abs(dU + ham + evaluate_functional(spec.potential_functional(), mu))


# -- Legendre transform -------------------------------------------------------

@dataclass
class LegendreTransform:
    ell: Callable
    grid: np.ndarray = field(repr=False)
    ell_grid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.ell_grid = np.array([self.ell(w) for w in self.grid])

    def argmax(self, z: float) -> tuple[float, float]:
        """(maximizing w, ell*(z)); the grid maximum is refined on its neighbouring cells."""
        g = self.grid
        vals = z * g - self.ell_grid
        k = int(np.argmax(vals))
        if k == len(g) - 1:
            raise NotSuperlinear(f"supremum for z={z} is not attained on the grid")
        best_w, best = float(g[k]), float(vals[k])
        lo, hi = g[max(k - 1, 0)], g[min(k + 1, len(g) - 1)]
        if hi > lo:
            res = minimize_scalar(lambda w: -(z * w - self.ell(w)), bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-13})
            if -res.fun > best:
                best_w, best = float(res.x), float(-res.fun)
        return best_w, best

    def __call__(self, z):
        if np.ndim(z) == 0:
            return self.argmax(float(z))[1]
        return np.array([self.argmax(float(zi))[1] for zi in np.ravel(z)]).reshape(np.shape(z))


DEFAULT_LEGENDRE_GRID = np.linspace(0.0, 50.0, 50_001)


def legendre(ell: Callable, grid=None) -> LegendreTransform:
    """ell*(z) = sup over w >= 0 of z w - ell(w): grid search refined by bounded Brent."""
    g = DEFAULT_LEGENDRE_GRID if grid is None else np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 3 or np.any(np.diff(g) <= 0):
        raise ValidationError("the grid must be increasing with at least 3 points")
    return LegendreTransform(ell, g)


@dataclass
class ModifiedHJEReport:
    value: float
    dU_dt: float
    grad_norm: float
    hamiltonian: float
    residual: float

    def to_dict(self):
        return dict(self.__dict__)


def modified_hje_residual(mu: DiscreteMeasure, t: float, G: FunctionalValue, ell, p: float = 2.0, *,
                          ht: float = 1e-4, hx: float = 1e-4, grid=None) -> ModifiedHJEReport:
    """U_t + ell*(|grad_mu U|_q) at (mu, t), with U from the modified Hopf-Lax formula.

    d_t U is a central difference in t; grad_mu U at particle k is the
    central-difference gradient of U in x_k divided by w_k.
    """
    if not t > ht:
        raise ValidationError("t must exceed the time step")
    ell = as_lagrangian(ell)
    q = conjugate_exponent(p)
    star = legendre(ell, grid)

    def U(m, s):
        return modified_hopf_lax(m, s, G, ell, p)

    value = U(mu, t)
    dU = (U(mu, t + ht) - U(mu, t - ht)) / (2.0 * ht)
    xi = np.zeros_like(mu.points)
    for k in range(mu.n):
        for a in range(mu.dim):
            P = mu.points.copy()
            P[k, a] += hx
            up = U(DiscreteMeasure(P, mu.weights), t)
            P[k, a] -= 2 * hx
            down = U(DiscreteMeasure(P, mu.weights), t)
            xi[k, a] = (up - down) / (2.0 * hx * mu.weights[k])
    gnorm = float(np.linalg.norm(xi, axis=1) ** q @ mu.weights) ** (1.0 / q)
    ham = star(gnorm)
    return ModifiedHJEReport(value, dU, gnorm, ham, abs(dU + ham))
