"""Problem data: exponent, initial cost, potential and growth constants."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import ValidationError
from .fields import Field, field_from_dict, zero
from .functionals import KINDS, FunctionalValue, integral
from .measure import DiscreteMeasure


def conjugate_exponent(p: float) -> float:
    return p / (p - 1.0)


def horizon(alpha: float, p: float) -> float:
    """Largest T with p (2 C_p T)^p alpha < 1, using C_p = p^(-1/p).

    Solving gives T = 1 / (2 alpha^(1/p)); nonpositive alpha gives no bound.
    """
    if p <= 1:
        raise ValidationError("p must exceed 1")
    if alpha <= 0:
        return math.inf
    return 0.5 * alpha ** (-1.0 / p)


def t_p(p: float) -> float:
    """Blow-up time of the a(t) Riccati-type equation for exponent p."""
    if p <= 1:
        raise ValidationError("p must exceed 1")
    q = conjugate_exponent(p)
    return (math.pi / q) / ((p - 1.0) ** (1.0 / q) * math.sin(math.pi / q))


@dataclass(frozen=True)
class ProblemSpec:
    """Exponent, initial cost g, potential V and the growth constants of both.

    ``functional`` selects how the potential acts on measures: ``integral``
    (integrate V), ``wasserstein_power`` (alpha W_p(mu, rho)^p + beta) or
    ``interaction`` (integrate V plus a pair kernel). The initial cost is
    always the integral of g.
    """

    p: float = 2.0
    g: Field = field(default_factory=zero)
    V: Field = field(default_factory=zero)
    functional: str = "integral"
    alpha: Optional[float] = None
    beta: float = 0.0
    rho: Optional[DiscreteMeasure] = None
    interaction: Optional[Field] = None
    L: Optional[float] = None

    def __post_init__(self):
        if not self.p > 1:
            raise ValidationError(f"p={self.p} must exceed 1")
        if self.functional not in KINDS:
            raise ValidationError(f"unknown functional kind {self.functional!r}")
        lip = self.g.lipschitz
        if self.L is None:
            object.__setattr__(self, "L", lip)
        elif self.L < 0:
            raise ValidationError("L must be nonnegative")
        elif self.g.kind != "custom" and not math.isclose(self.L, lip, rel_tol=1e-12, abs_tol=1e-12):
            raise ValidationError(f"declared L={self.L} differs from Lip(g)={lip}")
        a, _ = self.V.growth_constants(self.p)
        if self.functional == "interaction":
            if self.interaction is None:
                raise ValidationError("interaction functional needs an interaction kernel")
            a_w, _ = self.interaction.growth_constants(self.p)
            a = a + 2.0**self.p * a_w
        if self.functional == "wasserstein_power":
            if self.rho is None or self.alpha is None:
                raise ValidationError("wasserstein_power needs alpha and rho")
        elif self.alpha is None:
            object.__setattr__(self, "alpha", a)
        elif self.alpha < a:
            raise ValidationError(f"alpha={self.alpha} is below the growth constant a={a}")

    @property
    def q(self) -> float:
        return conjugate_exponent(self.p)

    @property
    def growth(self) -> tuple[float, float]:
        return self.V.growth_constants(self.p)

    def closed_form_kind(self) -> Optional[str]:
        """``quadratic_p2`` (V = |x|^2/2, p = 2), ``p_power`` (V = |x|^p/p) or None."""
        if not self.g.is_zero or self.functional != "integral":
            return None
        V = self.V
        if self.p == 2.0 and (
            (V.kind == "quadratic" and V.params["c"] == 0.5)
            or (V.kind == "p_power" and V.params["p"] == 2.0 and V.params["c"] == 1.0)
        ):
            return "quadratic_p2"
        if V.kind == "p_power" and V.params["p"] == self.p and V.params["c"] == 1.0:
            return "p_power"
        return None

    def time_horizon(self) -> float:
        """Largest time for which values are guaranteed finite.

        Closed-form data use the exact blow-up time; otherwise the
        Poincare-based bound from ``alpha``.
        """
        if self.closed_form_kind() is not None:
            return t_p(self.p)
        return horizon(self.alpha, self.p)

    def initial_functional(self) -> FunctionalValue:
        return integral(self.g)

    def potential_functional(self) -> FunctionalValue:
        if self.functional == "integral":
            return integral(self.V)
        if self.functional == "wasserstein_power":
            return FunctionalValue("wasserstein_power", alpha=self.alpha, beta=self.beta,
                                   rho=self.rho, p=self.p)
        return FunctionalValue("interaction", field=self.V, kernel=self.interaction)

    def with_(self, **changes) -> "ProblemSpec":
        from dataclasses import replace
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = {"p": self.p, "g": self.g.to_dict(), "V": self.V.to_dict(),
               "functional": self.functional, "alpha": self.alpha, "beta": self.beta}
        if self.rho is not None:
            out["rho"] = self.rho.to_dict()
        if self.interaction is not None:
            out["interaction"] = self.interaction.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemSpec":
        if "p" not in data:
            raise ValidationError("problem spec needs 'p'")
        rho = DiscreteMeasure.from_dict(data["rho"]) if data.get("rho") else None
        inter = field_from_dict(data["interaction"]) if data.get("interaction") else None
        return cls(p=float(data["p"]), g=field_from_dict(data.get("g")), V=field_from_dict(data.get("V")),
                   functional=data.get("functional", "integral"), alpha=data.get("alpha"),
                   beta=float(data.get("beta", 0.0)), rho=rho, interaction=inter, L=data.get("L"))
