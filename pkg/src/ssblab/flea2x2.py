"""Two-level caricature of a flea acting on a tunneling doublet.

In the basis e1 = Psi+, e2 = Psi- the perturbed Hamiltonian is modelled as

    H = 1/2 [[delta_+, -Delta], [-Delta, delta_-]].

For delta_pm = 0 its ground state is the cat (1, 1)/sqrt2; once |delta_+ -
delta_-| dominates Delta the ground state localizes on one basis vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .numerics import DenseSymMatrix


class DegenerateDoublet(ArithmeticError):
    """Delta = 0 and delta_+ = delta_-: every vector is a ground state.

    ``vectors`` holds an orthonormal basis of the eigenspace.
    """

    def __init__(self, message: str, vectors: tuple):
        super().__init__(message)
        self.vectors = vectors


@dataclass(frozen=True)
class FleaMatrixParams:
    delta_plus: float
    delta_minus: float
    gap: float

    def __post_init__(self):
        for name in ("delta_plus", "delta_minus", "gap"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.gap < 0:
            raise ValueError(f"gap must be >= 0, got {self.gap!r}")


def effective_hamiltonian(p: FleaMatrixParams) -> DenseSymMatrix:
    return DenseSymMatrix(0.5 * np.array([[p.delta_plus, -p.gap],
                                          [-p.gap, p.delta_minus]]))


def ground_weights(p: FleaMatrixParams) -> tuple[float, float]:
    """(c1^2, c2^2) of the ground state straight from the closed form.

    With s = delta_- - delta_+ and R = sqrt(s^2 + 4 Delta^2),
    c1^2 = (1 + s/R)/2.  The cat point s = 0 gives exactly (0.5, 0.5).
    """
    s = p.delta_minus - p.delta_plus
    if p.gap == 0 and s == 0:
        raise DegenerateDoublet("ground state is degenerate (Delta = 0, delta_+ = delta_-)",
                                ((1.0, 0.0), (0.0, 1.0)))
    R = math.hypot(s, 2 * p.gap)
    # the two forms avoid cancellation when s/R is close to -1 or +1
    if s >= 0:
        c1sq = 0.5 * (1 + s / R)
        c2sq = (p.gap / R) ** 2 / c1sq
    else:
        c2sq = 0.5 * (1 - s / R)
        c1sq = (p.gap / R) ** 2 / c2sq
    return c1sq, c2sq


def ground_state_2x2(p: FleaMatrixParams) -> tuple[float, float]:
    """Normalized ground eigenvector (c1, c2) with c1 >= 0; c2 >= 0 since Delta >= 0."""
    c1sq, c2sq = ground_weights(p)
    c1 = math.sqrt(c1sq)
    c2 = math.sqrt(c2sq)
    n = math.hypot(c1, c2)
    return c1 / n, c2 / n


def crossover_curve(gaps: Iterable[float], delta: float) -> list[tuple[float, float]]:
    """(Delta, c1^2) along a decreasing schedule with delta_+ = -delta, delta_- = +delta."""
    gaps = [float(g) for g in gaps]
    if not gaps:
        raise ValueError("empty gap schedule")
    if delta == 0:
        raise ValueError("delta must be nonzero")
    if any(g <= 0 for g in gaps):
        raise ValueError("gap schedule must be positive")
    if any(b >= a for a, b in zip(gaps, gaps[1:])):
        raise ValueError("gap schedule must be strictly decreasing")
    out = []
    for g in gaps:
        out.append((g, ground_weights(FleaMatrixParams(-delta, delta, g))[0]))
    return out
