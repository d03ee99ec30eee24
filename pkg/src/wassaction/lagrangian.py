"""Scalar convex increasing Lagrangians ell: [0, inf) -> R."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from scipy.optimize import brentq

from .errors import ValidationError


@dataclass(frozen=True)
class Lagrangian:
    name: str
    value: Callable[[float], float]
    deriv: Optional[Callable[[float], float]] = None
    inverse: Optional[Callable[[float], float]] = None  # inverse of deriv on [0, inf)

    def __call__(self, w: float) -> float:
        return self.value(w)

    def derivative(self, w: float, h: float = 1e-6) -> float:
        if self.deriv is not None:
            return self.deriv(w)
        h = h * max(1.0, abs(w))
        lo = max(w - h, 0.0)
        return (self.value(w + h) - self.value(lo)) / (w + h - lo)

    def inverse_deriv(self, z: float) -> float:
        """The speed w >= 0 with ell'(w) = z."""
        if self.inverse is not None:
            return self.inverse(z)
        if z <= self.derivative(0.0):
            return 0.0
        hi = 1.0
        while self.derivative(hi) < z:
            hi *= 2.0
            if hi > 1e12:
                raise ValidationError(f"{self.name} is not superlinear enough to balance slope {z}")
        return brentq(lambda w: self.derivative(w) - z, 0.0, hi, xtol=1e-14)


def power(p: float) -> Lagrangian:
    if p <= 1:
        raise ValidationError("p must exceed 1")
    return Lagrangian(f"power({p})", lambda w: abs(w) ** p / p,
                      lambda w: abs(w) ** (p - 1.0), lambda z: abs(z) ** (1.0 / (p - 1.0)))


def cosh_minus_one() -> Lagrangian:
    return Lagrangian("cosh-1", lambda w: math.cosh(w) - 1.0, math.sinh, math.asinh)


def as_lagrangian(ell) -> Lagrangian:
    if isinstance(ell, Lagrangian):
        return ell
    if callable(ell):
        return Lagrangian(getattr(ell, "__name__", "custom"), ell)
    raise ValidationError("ell must be callable")


def lagrangian_from_dict(data: dict) -> Lagrangian:
    kind = data.get("kind")
    if kind == "power":
        return power(float(data["p"]))
    if kind == "cosh":
        return cosh_minus_one()
    raise ValidationError(f"unknown Lagrangian kind {kind!r}")
