"""Functionals on discrete measures: integrals, Wasserstein powers, pair interactions.

Derivatives are taken with respect to the support points at fixed weights.
For the Wasserstein-power kind the optimal plan is held fixed (envelope
rule), which is exact wherever the optimal plan is locally unique.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError
from .fields import Field, power_grad, power_hess, zero
from .measure import DiscreteMeasure
from .transport import optimal_plan

KINDS = ("integral", "wasserstein_power", "interaction")


@dataclass(frozen=True)
class FunctionalValue:
    """A functional on measures.

    ``integral``: sum_i w_i f(x_i). ``wasserstein_power``: alpha W_p(mu, rho)^p + beta.
    ``interaction``: sum_ij w_i w_j W(x_i - x_j), plus ``sum_i w_i f(x_i)`` when
    ``field`` is given.
    """

    kind: str = "integral"
    field: Field = None
    alpha: float = 0.0
    beta: float = 0.0
    rho: Optional[DiscreteMeasure] = None
    p: float = 2.0
    kernel: Optional[Field] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown functional kind {self.kind!r}")
        if self.field is None:
            object.__setattr__(self, "field", zero())
        if self.kind == "wasserstein_power" and self.rho is None:
            raise ValidationError("wasserstein_power needs a reference measure rho")
        if self.kind == "interaction" and self.kernel is None:
            raise ValidationError("interaction needs a kernel field")

    @property
    def is_zero(self) -> bool:
        return self.kind == "integral" and self.field.is_zero

    @property
    def block_diagonal(self) -> bool:
        return self.kind != "interaction"

    # -- evaluation on a single configuration -------------------------------

    def value(self, points: np.ndarray, weights: np.ndarray) -> float:
        if self.kind == "integral":
            return float(weights @ self.field.value(points))
        if self.kind == "wasserstein_power":
            plan = self._plan(points, weights)
            return self.alpha * plan.cost() + self.beta
        diff = points[:, None, :] - points[None, :, :]
        pair = weights @ self.kernel.value(diff) @ weights
        return float(pair + weights @ self.field.value(points))

    def grad(self, points: np.ndarray, weights: np.ndarray) -> np.ndarray:
        if self.kind == "integral":
            return weights[:, None] * self.field.grad(points)
        if self.kind == "wasserstein_power":
            mass = self._plan(points, weights).mass
            diff = points[:, None, :] - self.rho.points[None, :, :]
            pg = self.p * power_grad(diff, self.p)
            return self.alpha * np.einsum("ij,ijd->id", mass, pg)
        diff = points[:, None, :] - points[None, :, :]
        kg = self.kernel.grad(diff)
        ww = weights[:, None] * weights[None, :]
        out = np.einsum("ij,ijd->id", ww, kg) - np.einsum("ji,jid->id", ww, kg)
        return out + weights[:, None] * self.field.grad(points)

    def hessian(self, points: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Shape ``(n, d, d)`` for block-diagonal kinds, ``(n, d, n, d)`` otherwise."""
        if self.kind == "integral":
            return weights[:, None, None] * self.field.hess(points)
        if self.kind == "wasserstein_power":
            mass = self._plan(points, weights).mass
            diff = points[:, None, :] - self.rho.points[None, :, :]
            ph = self.p * power_hess(diff, self.p)
            return self.alpha * np.einsum("ij,ijab->iab", mass, ph)
        n, d = points.shape
        diff = points[:, None, :] - points[None, :, :]
        kh = self.kernel.hess(diff)
        ww = weights[:, None] * weights[None, :]
        sym = ww[:, :, None, None] * (kh + np.swapaxes(kh, 0, 1))
        H = np.zeros((n, d, n, d))
        H -= np.transpose(sym, (0, 2, 1, 3))
        diag = sym.sum(axis=1) - sym[np.arange(n), np.arange(n)]
        for k in range(n):
            H[k, :, k, :] = diag[k] + weights[k] * self.field.hess(points[k])
        return H

    # -- batched evaluation over time slices ---------------------------------

    def value_batch(self, X: np.ndarray, weights: np.ndarray) -> np.ndarray:
        if self.kind == "integral":
            return self.field.value(X) @ weights
        return np.array([self.value(x, weights) for x in X])

    def grad_batch(self, X: np.ndarray, weights: np.ndarray) -> np.ndarray:
        if self.kind == "integral":
            return weights[None, :, None] * self.field.grad(X)
        return np.stack([self.grad(x, weights) for x in X])

    def hessian_batch(self, X: np.ndarray, weights: np.ndarray) -> np.ndarray:
        if self.kind == "integral":
            return weights[None, :, None, None] * self.field.hess(X)
        return np.stack([self.hessian(x, weights) for x in X])

    def _plan(self, points, weights):
        mu = DiscreteMeasure(points, weights)
        return optimal_plan(mu, self.rho, self.p)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "field": self.field.to_dict()}
        if self.kind == "wasserstein_power":
            out.update(alpha=self.alpha, beta=self.beta, rho=self.rho.to_dict(), p=self.p)
        if self.kind == "interaction":
            out["kernel"] = self.kernel.to_dict()
        return out


def integral(f: Field) -> FunctionalValue:
    return FunctionalValue("integral", field=f)


def evaluate_functional(F: FunctionalValue, mu: DiscreteMeasure) -> float:
    return F.value(mu.points, mu.weights)
