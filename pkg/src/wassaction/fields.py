"""Scalar fields on R^d used as initial costs, potentials and interaction kernels.

Every field evaluates on a batch of points ``x`` of shape ``(..., d)`` and
returns values ``(...)``, gradients ``(..., d)`` and Hessians ``(..., d, d)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ValidationError

_R_FLOOR = 1e-8


def _norm(x):
    return np.linalg.norm(x, axis=-1)


def _eye_like(x):
    d = x.shape[-1]
    return np.broadcast_to(np.eye(d), x.shape + (d,)).copy()


def power_grad(x, p):
    """Gradient of |x|^p / p, i.e. |x|^(p-2) x, with value 0 at the origin."""
    r = _norm(x)[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        fac = np.where(r > 0, r ** (p - 2.0), 0.0)
    return fac * x


def power_hess(x, p):
    """Hessian of |x|^p / p. The origin is regularized for p < 2."""
    r = np.maximum(_norm(x), _R_FLOOR)[..., None, None]
    unit = x / r[..., 0]
    outer = unit[..., :, None] * unit[..., None, :]
    if p == 2.0:
        return _eye_like(x)
    return r ** (p - 2.0) * (_eye_like(x) + (p - 2.0) * outer)


@dataclass(frozen=True)
class Field:
    """A C^2 scalar field with registry metadata.

    ``lipschitz`` is the analytic Lipschitz constant (``inf`` when unbounded);
    ``growth`` is the smallest exponent r with |f(x)| = O(|x|^r).
    """

    kind: str
    params: dict
    value: Callable = field(repr=False, compare=False)
    grad: Callable = field(repr=False, compare=False)
    hess: Callable = field(repr=False, compare=False)
    lipschitz: float = math.inf
    growth: float = math.inf
    coef: float = 0.0

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    def growth_constants(self, p: float) -> tuple[float, float]:
        """Constants (a, b) with |f(x)| <= a |x|^p + b.

        Sub-p growth gives ``a = 0``: any positive slope works once b is
        enlarged, so the time horizon is unbounded.
        """
        if self.kind == "zero":
            return 0.0, 0.0
        if self.growth < p:
            return 0.0, abs(self.coef)
        if self.growth == p:
            return self.coef, 0.0
        return math.inf, 0.0

    def to_dict(self) -> dict:
        if self.kind == "custom":
            raise ValidationError("custom fields cannot be serialized")
        return {"kind": self.kind, **self.params}


def zero() -> Field:
    return Field("zero", {},
                 value=lambda x: np.zeros(np.shape(x)[:-1]),
                 grad=lambda x: np.zeros(np.shape(x)),
                 hess=lambda x: np.zeros(np.shape(x) + (np.shape(x)[-1],)),
                 lipschitz=0.0, growth=0.0)


def linear(c) -> Field:
    c = np.atleast_1d(np.asarray(c, dtype=float))

    def check(x):
        if np.shape(x)[-1] != c.shape[0]:
            raise ValidationError(f"linear field has dimension {c.shape[0]}, points have {np.shape(x)[-1]}")
        return x

    return Field("linear", {"c": c.tolist()},
                 value=lambda x: check(x) @ c,
                 grad=lambda x: np.broadcast_to(c, np.shape(check(x))).copy(),
                 hess=lambda x: np.zeros(np.shape(x) + (c.shape[0],)),
                 lipschitz=float(np.linalg.norm(c)), growth=1.0, coef=float(np.linalg.norm(c)))


def quadratic(c: float) -> Field:
    """c |x|^2."""
    c = float(c)
    return Field("quadratic", {"c": c},
                 value=lambda x: c * np.sum(np.asarray(x) ** 2, axis=-1),
                 grad=lambda x: 2.0 * c * np.asarray(x),
                 hess=lambda x: 2.0 * c * _eye_like(np.asarray(x)),
                 lipschitz=0.0 if c == 0 else math.inf, growth=2.0, coef=abs(c))


def p_power(p: float, c: float = 1.0) -> Field:
    """c |x|^p / p."""
    p, c = float(p), float(c)
    if p <= 1:
        raise ValidationError("p_power needs p > 1")
    return Field("p_power", {"p": p, "c": c},
                 value=lambda x: c * _norm(x) ** p / p,
                 grad=lambda x: c * power_grad(np.asarray(x, dtype=float), p),
                 hess=lambda x: c * power_hess(np.asarray(x, dtype=float), p),
                 lipschitz=0.0 if c == 0 else math.inf, growth=p, coef=abs(c) / p)


def softabs(c: float = 1.0, eps: float = 1.0) -> Field:
    """c (sqrt(eps^2 + |x|^2) - eps): smooth, convex, Lipschitz with constant |c|."""
    c, eps = float(c), float(eps)

    def value(x):
        return c * (np.sqrt(eps**2 + np.sum(np.asarray(x) ** 2, axis=-1)) - eps)

    def grad(x):
        x = np.asarray(x, dtype=float)
        return c * x / np.sqrt(eps**2 + np.sum(x**2, axis=-1))[..., None]

    def hess(x):
        x = np.asarray(x, dtype=float)
        s = np.sqrt(eps**2 + np.sum(x**2, axis=-1))[..., None, None]
        outer = x[..., :, None] * x[..., None, :]
        return c * (_eye_like(x) / s - outer / s**3)

    return Field("softabs", {"c": c, "eps": eps}, value=value, grad=grad, hess=hess,
                 lipschitz=abs(c), growth=1.0, coef=abs(c))


def custom(value: Callable, grad: Callable, hess: Optional[Callable] = None, *,
           lipschitz: float = math.inf, growth: float = math.inf, coef: float = 0.0,
           fd_step: float = 1e-6) -> Field:
    """Wrap user callables. A missing Hessian is taken by central differences of ``grad``."""
    if hess is None:
        def hess(x):
            x = np.asarray(x, dtype=float)
            d = x.shape[-1]
            out = np.empty(x.shape + (d,))
            for j in range(d):
                e = np.zeros(d)
                e[j] = fd_step
                out[..., :, j] = (grad(x + e) - grad(x - e)) / (2 * fd_step)
            return 0.5 * (out + np.swapaxes(out, -1, -2))
    return Field("custom", {}, value=value, grad=grad, hess=hess,
                 lipschitz=lipschitz, growth=growth, coef=coef)


_REGISTRY = {
    "zero": lambda d: zero(),
    "linear": lambda d: linear(d["c"]),
    "quadratic": lambda d: quadratic(d["c"]),
    "p_power": lambda d: p_power(d["p"], d.get("c", 1.0)),
    "softabs": lambda d: softabs(d.get("c", 1.0), d.get("eps", 1.0)),
}


def field_from_dict(data: dict | None) -> Field:
    if data is None:
        return zero()
    kind = data.get("kind")
    if kind not in _REGISTRY:
        raise ValidationError(f"unknown field kind {kind!r}; expected one of {sorted(_REGISTRY)}")
    try:
        return _REGISTRY[kind](data)
    except KeyError as exc:
        raise ValidationError(f"field {kind!r} missing parameter {exc}") from None
