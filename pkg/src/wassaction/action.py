"""Direct transcription of the action on a uniform time grid.

Positions live on nodes ``s_i = i * t / N``. Velocities are forward
differences, the potential is sampled at segment midpoints, and the last
node is pinned to the terminal configuration. All particles of an ensemble
share the grid; a single path is the case ``n = 1``.
"""
from __future__ import annotations

import numpy as np
from scipy import sparse

from .fields import power_grad, power_hess
from .functionals import FunctionalValue


class DiscreteAction:
    def __init__(self, terminal: np.ndarray, weights: np.ndarray, t: float, N: int, p: float,
                 G: FunctionalValue, V: FunctionalValue):
        self.terminal = np.asarray(terminal, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.n, self.d = self.terminal.shape
        self.t, self.N, self.p = float(t), int(N), float(p)
        self.ds = self.t / self.N
        self.G, self.V = G, V
        self.size = self.N * self.n * self.d

    # -- packing ------------------------------------------------------------

    def full(self, z: np.ndarray) -> np.ndarray:
        X = np.empty((self.N + 1, self.n, self.d))
        X[:-1] = z.reshape(self.N, self.n, self.d)
        X[-1] = self.terminal
        return X

    def pack(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X[:-1], dtype=float).ravel().copy()

    def stationary(self) -> np.ndarray:
        return np.broadcast_to(self.terminal, (self.N, self.n, self.d)).ravel().copy()

    def grad_scale(self) -> np.ndarray:
        return np.broadcast_to(self.weights[None, :, None], (self.N, self.n, self.d)).ravel().copy()

    # -- objective ----------------------------------------------------------

    def value_full(self, X: np.ndarray) -> float:
        v = np.diff(X, axis=0) / self.ds
        mid = 0.5 * (X[1:] + X[:-1])
        kin = np.sum(np.linalg.norm(v, axis=2) ** self.p @ self.weights) / self.p
        pot = np.sum(self.V.value_batch(mid, self.weights)) if not self.V.is_zero else 0.0
        return float(self.G.value(X[0], self.weights) + self.ds * (kin - pot))

    def value(self, z: np.ndarray) -> float:
        return self.value_full(self.full(z))

    def grad(self, z: np.ndarray) -> np.ndarray:
        X = self.full(z)
        v = np.diff(X, axis=0) / self.ds
        m = self.weights[None, :, None] * power_grad(v, self.p)
        gX = np.zeros_like(X)
        gX[:-1] -= m
        gX[1:] += m
        if not self.V.is_zero:
            mid = 0.5 * (X[1:] + X[:-1])
            gv = -0.5 * self.ds * self.V.grad_batch(mid, self.weights)
            gX[:-1] += gv
            gX[1:] += gv
        gX[0] += self.G.grad(X[0], self.weights)
        return gX[:-1].ravel()

    def hess(self, z: np.ndarray) -> sparse.csc_matrix:
        X = self.full(z)
        n, d, N = self.n, self.d, self.N
        v = np.diff(X, axis=0) / self.ds
        K = (self.weights[None, :, None, None] / self.ds) * power_hess(v, self.p)  # (N, n, d, d)
        rows, cols, vals = [], [], []

        def add_diag_blocks(I, J, B, sign):
            # B: (len(I), n, d, d) acting particle-wise between nodes I and J
            keep = (I < N) & (J < N)
            I, J, B = I[keep], J[keep], B[keep]
            if I.size == 0:
                return
            k = np.arange(n)[None, :, None, None]
            a = np.arange(d)[None, None, :, None]
            b = np.arange(d)[None, None, None, :]
            r = (I[:, None, None, None] * n + k) * d + a
            c = (J[:, None, None, None] * n + k) * d + b
            shape = B.shape
            rows.append(np.broadcast_to(r, shape).ravel())
            cols.append(np.broadcast_to(c, shape).ravel())
            vals.append(sign * B.ravel())

        def add_full_blocks(I, J, B, sign):
            # B: (len(I), n, d, n, d)
            keep = (I < N) & (J < N)
            I, J, B = I[keep], J[keep], B[keep]
            if I.size == 0:
                return
            k = np.arange(n)[None, :, None, None, None]
            a = np.arange(d)[None, None, :, None, None]
            l = np.arange(n)[None, None, None, :, None]
            b = np.arange(d)[None, None, None, None, :]
            r = (I[:, None, None, None, None] * n + k) * d + a
            c = (J[:, None, None, None, None] * n + l) * d + b
            shape = B.shape
            rows.append(np.broadcast_to(r, shape).ravel())
            cols.append(np.broadcast_to(c, shape).ravel())
            vals.append(sign * B.ravel())

        idx = np.arange(N)
        add_diag_blocks(idx, idx, K, 1.0)
        add_diag_blocks(idx + 1, idx + 1, K, 1.0)
        add_diag_blocks(idx, idx + 1, K, -1.0)
        add_diag_blocks(idx + 1, idx, K, -1.0)

        if not self.V.is_zero:
            mid = 0.5 * (X[1:] + X[:-1])
            HV = 0.25 * self.ds * self.V.hessian_batch(mid, self.weights)
            adder = add_diag_blocks if HV.ndim == 4 else add_full_blocks
            for I, J in ((idx, idx), (idx + 1, idx + 1), (idx, idx + 1), (idx + 1, idx)):
                adder(I, J, HV, -1.0)

        if not self.G.is_zero:
            HG = self.G.hessian(X[0], self.weights)[None]
            zero = np.zeros(1, dtype=int)
            (add_diag_blocks if HG.ndim == 4 else add_full_blocks)(zero, zero, HG, 1.0)

        H = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(self.size, self.size))
        return H.tocsc()

    # -- pieces used by diagnostics -----------------------------------------

    def interval_terms(self, X: np.ndarray) -> np.ndarray:
        """Per-interval kinetic-minus-potential contributions (length N)."""
        v = np.diff(X, axis=0) / self.ds
        mid = 0.5 * (X[1:] + X[:-1])
        kin = (np.linalg.norm(v, axis=2) ** self.p @ self.weights) / self.p
        pot = self.V.value_batch(mid, self.weights) if not self.V.is_zero else np.zeros(self.N)
        return self.ds * (kin - pot)
