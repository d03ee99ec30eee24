"""Finitely supported probability measures on R^d."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyMeasure, ValidationError

WEIGHT_TOL = 1e-12


def _as_points(points) -> np.ndarray:
    rows = [np.atleast_1d(np.asarray(x, dtype=float)) for x in points]
    if not rows:
        raise EmptyMeasure("measure has no support points")
    dims = {r.shape for r in rows}
    if len(dims) != 1 or rows[0].ndim != 1:
        raise DimensionMismatch(f"support points have differing shapes {sorted(dims)}")
    return np.stack(rows)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted particle cloud.

    ``points`` has shape ``(n, d)`` and ``weights`` shape ``(n,)``. Construction
    validates rather than repairs; use :func:`new_measure` to renormalize raw
    weights.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2:
            raise DimensionMismatch("points must be an (n, d) array")
        if pts.shape[0] != w.shape[0]:
            raise ValidationError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if pts.shape[0] == 0:
            raise EmptyMeasure("measure has no support points")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("support points must be finite")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValidationError("weights must be finite and strictly positive")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"weights sum to {w.sum()!r}, not 1")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def merged(self, tol: float = 1e-12) -> "DiscreteMeasure":
        """Combine coincident support points (used for comparisons only)."""
        order = np.lexsort(self.points.T[::-1])
        pts, ws = [], []
        for i in order:
            x = self.points[i]
            if pts and np.max(np.abs(pts[-1] - x)) <= tol:
                ws[-1] += self.weights[i]
            else:
                pts.append(x.copy())
                ws.append(float(self.weights[i]))
        return DiscreteMeasure(np.array(pts), np.array(ws) / np.sum(ws))

    def same_as(self, other: "DiscreteMeasure", tol: float = 1e-9) -> bool:
        a, b = self.merged(tol), other.merged(tol)
        if a.n != b.n or a.dim != b.dim:
            return False
        return bool(np.allclose(a.points, b.points, atol=tol, rtol=0)
                    and np.allclose(a.weights, b.weights, atol=tol, rtol=0))

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteMeasure":
        try:
            return new_measure(data["points"], data["weights"], strict=True)
        except KeyError as exc:
            raise ValidationError(f"measure object missing key {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DiscreteMeasure":
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return f"DiscreteMeasure(n={self.n}, d={self.dim})"


def new_measure(points: Sequence, weights: Sequence[float], *, strict: bool = False) -> DiscreteMeasure:
    """Build a measure from raw weights: drop zeros, renormalize to sum 1.

    With ``strict=True`` (used when loading files) weights whose sum is off
    by more than ``WEIGHT_TOL`` are rejected instead of rescaled.
    """
    pts = _as_points(points)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != pts.shape[0]:
        raise ValidationError(f"{pts.shape[0]} points but {w.shape[0]} weights")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValidationError("weights must be finite and nonnegative")
    keep = w > 0
    if not np.any(keep):
        raise EmptyMeasure("all weights are zero")
    w = w[keep]
    if strict and abs(w.sum() - 1.0) > WEIGHT_TOL:
        raise ValidationError(f"weights sum to {w.sum()!r}, not 1")
    w = w / w.sum()
    # one more pass absorbs the rounding of the division
    w = w / w.sum()
    return DiscreteMeasure(pts[keep], w)


def uniform_measure(points: Sequence) -> DiscreteMeasure:
    pts = _as_points(points)
    return new_measure(pts, np.ones(pts.shape[0]))


def dirac(x) -> DiscreteMeasure:
    return new_measure([x], [1.0])


def pth_moment(mu: DiscreteMeasure, p: float) -> float:
    norms = np.linalg.norm(mu.points, axis=1)
    return float(mu.weights @ norms**p)


def pushforward(mu: DiscreteMeasure, fmap: Callable[[np.ndarray], np.ndarray]) -> DiscreteMeasure:
    """Image measure under ``fmap``; particles keep their identity and weight."""
    images = np.stack([np.atleast_1d(np.asarray(fmap(x), dtype=float)) for x in mu.points])
    return DiscreteMeasure(images, mu.weights.copy())


def random_measure(n: int, d: int, rng: np.random.Generator, *, scale: float = 1.0,
                   uniform: bool = False) -> DiscreteMeasure:
    points = scale * rng.standard_normal((n, d))
    weights = np.ones(n) if uniform else rng.uniform(0.2, 1.0, n)
    return new_measure(points, weights)
