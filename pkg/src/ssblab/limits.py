"""Measure-level diagnostics for limit states.

States at finite N or positive hbar are rendered as discrete probability
measures (Husimi cells on phase space, order-parameter histograms, Bloch
ball samples).  Convergence towards a limit state that is a point mass or
a convex mixture of point masses is measured by how much weight sits in
small balls around the target points.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MONOTONE_SLACK = 0.02


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported measure: ``points`` has shape (K, d)."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.array(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        w = _frozen(self.weights).reshape(-1)
        if p.shape[0] != w.size:
            raise ValueError("one weight per support point")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        p.flags.writeable = False
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points, self.weights

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def mean(self) -> np.ndarray:
        return (self.weights @ self.points) / self.total_mass


@dataclass(frozen=True)
class PhaseSpaceMeasure:
    """Cell weights on a rectangular (p, q) grid.

    ``weights[i, j]`` is the mass of the cell centred at
    ``(p_centers[i], q_centers[j])``.  A windowed measure may miss tail
    mass, so the total is only required to lie in [0, 1.02].
    """

    p_centers: np.ndarray
    q_centers: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = _frozen(self.p_centers)
        q = _frozen(self.q_centers)
        w = _frozen(self.weights)
        if w.shape != (p.size, q.size):
            raise ValueError(f"weights shape {w.shape} does not match grid {(p.size, q.size)}")
        if np.any(w < -1e-15):
            raise ValueError("cell weights must be non-negative")
        total = float(w.sum())
        if total > 1.02:
            raise ValueError(f"total mass {total:.4f} exceeds 1 + 2e-2")
        object.__setattr__(self, "p_centers", p)
        object.__setattr__(self, "q_centers", q)
        object.__setattr__(self, "weights", w)

    @property
    def cell_area(self) -> float:
        dp = self.p_centers[1] - self.p_centers[0] if self.p_centers.size > 1 else 1.0
        dq = self.q_centers[1] - self.q_centers[0] if self.q_centers.size > 1 else 1.0
        return float(dp * dq)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        P, Q = np.meshgrid(self.p_centers, self.q_centers, indexing="ij")
        return np.column_stack([P.ravel(), Q.ravel()]), self.weights.ravel()

    def argmax(self) -> tuple[float, float]:
        i, j = np.unravel_index(int(np.argmax(self.weights)), self.weights.shape)
        return float(self.p_centers[i]), float(self.q_centers[j])


@dataclass(frozen=True)
class MixtureTarget:
    """Convex combination of point masses, the shape of every limit state here."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.array(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        w = _frozen(self.weights).reshape(-1)
        if p.shape[0] != w.size:
            raise ValueError("one weight per target point")
        if np.any(w < 0):
            raise ValueError("target weights must be non-negative")
        if abs(w.sum() - 1) > 1e-12:
            raise ValueError(f"target weights must sum to 1, got {w.sum()!r}")
        p.flags.writeable = False
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    @classmethod
    def pure(cls, point) -> "MixtureTarget":
        return cls(np.atleast_2d(np.asarray(point, dtype=float)), [1.0])

    @classmethod
    def symmetric(cls, point_a, point_b) -> "MixtureTarget":
        return cls(np.vstack([np.asarray(point_a, float), np.asarray(point_b, float)]), [0.5, 0.5])

    def default_radius(self) -> float:
        """Half the smallest distance between target points (1.0 for a pure target)."""
        if self.points.shape[0] < 2:
            return 1.0
        diffs = self.points[:, None, :] - self.points[None, :, :]
        dist = np.sqrt((diffs ** 2).sum(-1))
        return 0.5 * float(dist[np.triu_indices(self.points.shape[0], 1)].min())


def mass_in_ball(measure, center, radius: float) -> float:
    """Weight carried by support points within ``radius`` of ``center``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    pts, w = measure.support()
    c = np.asarray(center, dtype=float).reshape(1, -1)
    if c.shape[1] != pts.shape[1]:
        raise ValueError(f"centre has dimension {c.shape[1]}, measure lives in {pts.shape[1]}")
    inside = np.sum((pts - c) ** 2, axis=1) <= radius * radius * (1 + 1e-12)
    return float(min(max(w[inside].sum(), 0.0), 1.0))


def mixture_deviation(measure, target: MixtureTarget, radius: float | None = None) -> float:
    """Largest |ball mass - target weight| over the target points."""
    r = target.default_radius() if radius is None else radius
    pts = target.points
    if pts.shape[0] > 1:
        diffs = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diffs ** 2).sum(-1))
        off = dist[np.triu_indices(pts.shape[0], 1)]
        if np.any(off < 2 * r * (1 - 1e-12)):
            raise ValueError(f"balls of radius {r} around the target points overlap")
    return max(abs(mass_in_ball(measure, p, r) - w) for p, w in zip(pts, target.weights))


def is_monotone(deviations: Sequence[float], slack: float = MONOTONE_SLACK) -> bool:
    """No entry exceeds its predecessor by more than ``slack``."""
    return all(b <= a + slack for a, b in zip(deviations, deviations[1:]))


@dataclass(frozen=True)
class ConvergenceReport:
    parameters: tuple
    deviations: tuple
    monotone: bool

    def rows(self) -> list[tuple]:
        return list(zip(self.parameters, self.deviations))


def convergence_report(family: Iterable[tuple], target: MixtureTarget,
                       radius: float | None = None, slack: float = MONOTONE_SLACK) -> ConvergenceReport:
    """Tabulate deviations along a family ordered towards the limit.

    ``monotone`` follows :func:`is_monotone`.
    """
    family = list(family)
    if len(family) < 2:
        raise ValueError("a convergence report needs at least two family members")
    params = tuple(p for p, _ in family)
    devs = tuple(mixture_deviation(m, target, radius) for _, m in family)
    return ConvergenceReport(params, devs, is_monotone(devs, slack))
