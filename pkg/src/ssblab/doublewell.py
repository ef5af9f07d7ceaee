"""Symmetric quartic double well in the small-hbar regime.

The Hamiltonian -(hbar^2/2m) d^2/dx^2 + (lam/4)(x^2 - a^2)^2 is truncated
to a centred box [-L, L] with Dirichlet walls and discretized by second
order central differences.  The grid always has an odd number of points so
that x = 0 is a grid point and the reflection x -> -x is the index
reversal i -> n-1-i.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .limits import PhaseSpaceMeasure
from .numerics import (EigenPairSet, SymTridiag, eig_tridiag_lowest,
                       parity_lowest, trapezoid)


@dataclass(frozen=True)
class DoubleWellParams:
    hbar: float
    mass: float = 1.0
    lam: float = 1.0
    a: float = 1.0

    def __post_init__(self):
        for name in ("hbar", "mass", "lam", "a"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        return 0.25 * self.lam * (x * x - self.a * self.a) ** 2

    def classical_energy(self, p, q):
        return np.asarray(p) ** 2 / (2 * self.mass) + self.potential(q)

    @property
    def omega(self) -> float:
        """Harmonic frequency at the well bottoms, sqrt(V''(a)/m)."""
        return self.a * math.sqrt(2 * self.lam / self.mass)


@dataclass(frozen=True)
class GridSpec:
    """Centred grid on [-L, L] including both end points.

    An even point count is bumped to the next odd number so that the
    origin is a grid point.
    """

    half_width: float
    points: int

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        n = int(self.points)
        if n < 3:
            raise ValueError("a grid needs at least 3 points")
        if n % 2 == 0:
            n += 1
        object.__setattr__(self, "points", n)

    @classmethod
    def default(cls, params: DoubleWellParams, points: int = 4001) -> "GridSpec":
        tail = (params.hbar ** 2 / (2 * params.mass * params.lam * params.a ** 2)) ** 0.25
        return cls(params.a + 4 * tail + 2, points)

    @property
    def dx(self) -> float:
        return 2 * self.half_width / (self.points - 1)

    @property
    def x(self) -> np.ndarray:
        # mirrored half so that x[i] == -x[n-1-i] exactly
        c = self.points // 2
        right = self.half_width * (np.arange(1, c + 1) / c)
        return np.concatenate([-right[::-1], [0.0], right])

    def refined(self) -> "GridSpec":
        """Same box, half the spacing."""
        return GridSpec(self.half_width, 2 * self.points - 1)


@dataclass(frozen=True)
class BumpFlea:
    """Asymmetric bump eps * max(0, 1 - ((x - x0)/w)^2).

    ``center`` defaults to the right well bottom +a and ``width`` to a/2.
    A positive strength raises the energy near ``center`` and so pushes
    the ground state into the opposite well.
    """

    strength: float
    center: Optional[float] = None
    width: Optional[float] = None

    def profile(self, x, params: DoubleWellParams) -> np.ndarray:
        x0 = params.a if self.center is None else self.center
        w = params.a / 2 if self.width is None else self.width
        if not w > 0:
            raise ValueError("flea width must be positive")
        return self.strength * np.maximum(0.0, 1.0 - ((np.asarray(x) - x0) / w) ** 2)


@dataclass(frozen=True)
class GridWavefunction:
    """Wavefunction samples normalized so that sum |psi_i|^2 dx = 1."""

    values: np.ndarray
    dx: float
    x: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, copy=True)
        if v.ndim != 1 or v.shape != np.shape(self.x):
            raise ValueError("values and grid must be 1-d arrays of equal length")
        norm = float(np.sum(np.abs(v) ** 2) * self.dx)
        if abs(norm - 1) > 1e-10:
            raise ValueError(f"wavefunction is not normalized: ||psi||^2 = {norm!r}")
        v.flags.writeable = False
        xs = np.array(self.x, dtype=float, copy=True)
        xs.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "x", xs)

    @classmethod
    def from_vector(cls, v: np.ndarray, grid: GridSpec) -> "GridWavefunction":
        v = np.asarray(v)
        return cls(v / math.sqrt(float(np.sum(np.abs(v) ** 2)) * grid.dx), grid.dx, grid.x)

    def inner(self, other: "GridWavefunction") -> complex:
        return complex(np.sum(np.conj(self.values) * other.values) * self.dx)

    def reflected(self) -> "GridWavefunction":
        return GridWavefunction(self.values[::-1], self.dx, self.x)


@dataclass(frozen=True)
class WkbPrediction:
    """Leading-order tunneling splitting hbar*omega/sqrt(e*pi/2) * exp(-d_V/hbar).

    ``d_V`` is the integral of sqrt(V) between the wells.  The
    dimensionally consistent barrier action sqrt(2m)*d_V is carried
    alongside as ``tunneling_action``; for m = 1/2 the two coincide.
    """

    d_V: float
    omega: float
    predicted_gap: float
    tunneling_action: float


def build_hamiltonian(p: DoubleWellParams, g: GridSpec, flea: Optional[BumpFlea] = None) -> SymTridiag:
    if g.half_width <= p.a:
        raise ValueError(f"wells outside box: L={g.half_width} must exceed a={p.a}")
    x = g.x
    c = p.hbar ** 2 / (2 * p.mass * g.dx ** 2)
    diag = 2 * c + p.potential(x)
    if flea is not None:
        diag = diag + flea.profile(x, p)
    return SymTridiag(diag, np.full(g.points - 1, -c))


def lowest_pair(p: DoubleWellParams, g: GridSpec, flea: Optional[BumpFlea] = None,
                tol: float = 1e-10) -> EigenPairSet:
    """Ground state and first excited state on the grid (Euclidean-normalized columns).

    Without a flea the two parity sectors are solved separately: the
    ground vector is even and positive, the excited one odd and positive
    for x > 0, so (psi0 + psi1)/sqrt2 sits in the right well.
    """
    if g.dx > p.a / 20:
        warnings.warn(f"grid spacing {g.dx:.3g} exceeds a/20; wells are poorly resolved",
                      stacklevel=2)
    T = build_hamiltonian(p, g, flea)
    if flea is None:
        return parity_lowest(T, 2, tol)
    return eig_tridiag_lowest(T, 2, tol)


def wkb_gap(p: DoubleWellParams, points: int = 20001) -> WkbPrediction:
    x = np.linspace(-p.a, p.a, points)
    d_v = trapezoid(np.sqrt(p.potential(x)), x[1] - x[0])
    omega = p.omega
    pred = p.hbar * omega / math.sqrt(0.5 * math.e * math.pi) * math.exp(-d_v / p.hbar)
    return WkbPrediction(d_v, omega, pred, math.sqrt(2 * p.mass) * d_v)


def cat_states(pair: EigenPairSet, g: GridSpec) -> tuple[GridWavefunction, GridWavefunction]:
    """(psi0 +- psi1)/sqrt2 as grid wavefunctions; Psi+ is the right-well state."""
    if pair.k < 2:
        raise ValueError("cat states need the two lowest eigenvectors")
    v0, v1 = pair.vector(0), pair.vector(1)
    if np.sum(v0 * g.x * v1) < 0:
        v1 = -v1
    plus = GridWavefunction.from_vector((v0 + v1) / math.sqrt(2), g)
    minus = GridWavefunction.from_vector((v0 - v1) / math.sqrt(2), g)
    return plus, minus


def eigenstate(pair: EigenPairSet, g: GridSpec, index: int = 0) -> GridWavefunction:
    return GridWavefunction.from_vector(pair.vector(index), g)


def side_mass(psi: GridWavefunction, side: str) -> float:
    """Probability on one half-line; the centre point is split evenly."""
    dens = np.abs(psi.values) ** 2 * psi.dx
    c = dens.size // 2
    centre = 0.5 * dens[c] if dens.size % 2 else 0.0
    if side == "right":
        return float(dens[dens.size - c:].sum() + centre)
    if side == "left":
        return float(dens[:c].sum() + centre)
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def coherent_state(p0: float, q0: float, hbar: float, x: np.ndarray) -> np.ndarray:
    """Gaussian coherent state centred at momentum p0 and position q0."""
    x = np.asarray(x, dtype=float)
    return ((math.pi * hbar) ** -0.25 * np.exp(-1j * p0 * q0 / (2 * hbar))
            * np.exp(1j * p0 * x / hbar) * np.exp(-((x - q0) ** 2) / (2 * hbar)))


@dataclass(frozen=True)
class PhaseSpaceWindow:
    p_min: float
    p_max: float
    q_min: float
    q_max: float

    def __post_init__(self):
        if not (self.p_max > self.p_min and self.q_max > self.q_min):
            raise ValueError("window bounds must satisfy min < max on both axes")

    @classmethod
    def default(cls, params: DoubleWellParams, margin: float = 1.5) -> "PhaseSpaceWindow":
        q = margin * 2 * params.a
        pmax = margin * 2 * math.sqrt(params.mass * params.lam) * params.a ** 2
        return cls(-pmax, pmax, -q, q)

    def covers(self, params: DoubleWellParams) -> bool:
        pm = 2 * math.sqrt(params.mass * params.lam) * params.a ** 2
        qm = 2 * params.a
        return self.p_min <= -pm and self.p_max >= pm and self.q_min <= -qm and self.q_max >= qm


def husimi(psi: GridWavefunction, params: DoubleWellParams,
           window: Optional[PhaseSpaceWindow] = None,
           resolution: tuple[int, int] = (121, 121)) -> PhaseSpaceMeasure:
    """Husimi measure |<Phi_(p,q), psi>|^2 dp dq / (2 pi hbar) on window cells.

    The overlaps with the coherent states are computed by the trapezoid
    rule on the wavefunction's grid.
    """
    n_p, n_q = (int(r) for r in resolution)
    if n_p < 8 or n_q < 8:
        raise ValueError("Husimi resolution must be at least 8 cells per axis")
    window = PhaseSpaceWindow.default(params) if window is None else window
    if not window.covers(params):
        warnings.warn("phase-space window does not cover both wells; mass will be lost",
                      stacklevel=2)
    hbar = params.hbar
    dp = (window.p_max - window.p_min) / n_p
    dq = (window.q_max - window.q_min) / n_q
    ps = window.p_min + dp * (np.arange(n_p) + 0.5)
    qs = window.q_min + dq * (np.arange(n_q) + 0.5)

    x = psi.x
    w = np.full(x.size, psi.dx)
    w[0] = w[-1] = 0.5 * psi.dx
    gauss = np.exp(-((x[:, None] - qs[None, :]) ** 2) / (2 * hbar))
    G = (w * psi.values)[:, None] * gauss
    F = np.exp(-1j * np.outer(ps, x) / hbar)
    amp = (math.pi * hbar) ** -0.25 * (F @ G)
    weights = np.abs(amp) ** 2 * dp * dq / (2 * math.pi * hbar)
    return PhaseSpaceMeasure(ps, qs, weights)
