"""Damped Newton minimization with exact (sparse or dense) Hessians."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import MatrixRankWarning, spsolve


@dataclass
class OptResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    iterations: int
    converged: bool


def _solve(H, g, lam):
    n = g.shape[0]
    if sparse.issparse(H):
        A = (H + lam * sparse.identity(n, format="csc")).tocsc()
        with warnings.catch_warnings():
            warnings.simplefilter("error", MatrixRankWarning)
            try:
                step = spsolve(A, -g)
            except (MatrixRankWarning, RuntimeError):
                return None
    else:
        try:
            step = np.linalg.solve(H + lam * np.eye(n), -g)
        except np.linalg.LinAlgError:
            return None
    return step if np.all(np.isfinite(step)) else None


def newton_minimize(fun: Callable, grad: Callable, hess: Callable, x0: np.ndarray, *,
                    gtol: float = 1e-8, maxiter: int = 5000,
                    scale: Optional[np.ndarray] = None) -> OptResult:
    """Minimize ``fun`` until ``max |grad / scale| <= gtol``.

    Newton steps are damped by a Levenberg shift ``lam * I`` whenever the
    Hessian system is singular or yields a non-descent direction, and
    globalized by Armijo backtracking.
    """
    x = np.array(x0, dtype=float)
    scale = np.ones_like(x) if scale is None else np.asarray(scale, dtype=float)
    f = fun(x)
    g = grad(x)
    gnorm = float(np.max(np.abs(g / scale))) if g.size else 0.0
    lam = 0.0
    for it in range(maxiter):
        if gnorm <= gtol:
            return OptResult(x, f, gnorm, it, True)
        H = hess(x)
        accepted = False
        for _ in range(60):
            step = _solve(H, g, lam)
            slope = float(g @ step) if step is not None else 0.0
            if step is None or slope >= 0:
                lam = max(10.0 * lam, 1e-10 * max(1.0, float(np.max(np.abs(g)))))
                continue
            alpha = 1.0
            for _ in range(40):
                x_new = x + alpha * step
                f_new = fun(x_new)
                if np.isfinite(f_new) and f_new <= f + 1e-4 * alpha * slope:
                    accepted = True
                    break
                if np.isfinite(f_new) and abs(f_new - f) <= 1e-14 * (1.0 + abs(f)):
                    # objective is flat to rounding; fall back on gradient decrease
                    g_try = grad(x_new)
                    if np.max(np.abs(g_try / scale)) < gnorm:
                        accepted = True
                        break
                alpha *= 0.5
            if accepted:
                break
            lam = max(10.0 * lam, 1e-10 * max(1.0, float(np.max(np.abs(g)))))
        if not accepted:
            return OptResult(x, f, gnorm, it, False)
        x, f = x_new, f_new
        g = grad(x)
        gnorm = float(np.max(np.abs(g / scale)))
        if alpha == 1.0:
            lam = lam * 0.1 if lam > 1e-12 else 0.0
    return OptResult(x, f, gnorm, maxiter, gnorm <= gtol)
