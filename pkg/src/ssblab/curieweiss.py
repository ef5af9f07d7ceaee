"""Quantum Curie-Weiss model and its classical limit on the Bloch ball.

The Hamiltonian H = -2N (S_z^2 + B S_x), with averaged spins S = J/N, commutes
with every site permutation, so the low spectrum lives in the maximal
collective-spin sector j = N/2 of dimension N + 1.  Basis index i holds
J_z = m = i - N/2.  Flipping all spins maps m to -m, which is index reversal.

A flea adds -delta * N * S_z = -delta * J_z to the sector matrix; positive
delta favours z > 0.

The classical limit is the Bloch ball with coordinates x = 2 S in the large-N
limit, energy h(x, y, z) = -(z^2/2 + B x) and the Lie-Poisson flow
dx/dt = 2yz, dy/dt = 2z(B - x), dz/dt = -2By.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .numerics import (EigenPairSet, SymTridiag, Trajectory, eig_dense_sym,
                       eig_tridiag_lowest, parity_lowest, rk4_integrate)

BALL_TOL = 1e-9
MAX_FULL_SITES = 12


@dataclass(frozen=True)
class CWParams:
    N: int
    B: float
    flea: Optional[float] = None

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 2, got {self.N!r}")
        if not (np.isfinite(self.B) and self.B >= 0):
            raise ValueError(f"B must be a finite number >= 0, got {self.B!r}")
        if self.flea is not None and not np.isfinite(self.flea):
            raise ValueError("flea strength must be finite")

    @property
    def j(self) -> float:
        return self.N / 2

    @property
    def m(self) -> np.ndarray:
        return np.arange(self.N + 1) - self.N / 2


@dataclass(frozen=True)
class SectorState:
    """Amplitudes over J_z = -N/2 ... N/2; may be complex."""

    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.array(self.amplitudes, copy=True)
        if a.dtype.kind not in "fc":
            a = a.astype(float)
        if a.ndim != 1 or a.size < 3 or a.size % 2 == 0:
            raise ValueError("a sector state has N+1 amplitudes with N even and >= 2")
        norm = float(np.sum(np.abs(a) ** 2))
        if abs(norm - 1) > 1e-10:
            raise ValueError(f"sector state is not normalized: ||v||^2 = {norm!r}")
        a.flags.writeable = False
        object.__setattr__(self, "amplitudes", a)

    @property
    def N(self) -> int:
        return self.amplitudes.size - 1

    @classmethod
    def from_vector(cls, v) -> "SectorState":
        v = np.asarray(v)
        return cls(v / np.linalg.norm(v))


@dataclass(frozen=True)
class BlochPoint:
    x: float
    y: float
    z: float

    def __post_init__(self):
        r2 = self.x ** 2 + self.y ** 2 + self.z ** 2
        if not r2 <= 1 + BALL_TOL:
            raise ValueError(f"point ({self.x}, {self.y}, {self.z}) lies outside the Bloch ball")

    @property
    def radius(self) -> float:
        return math.sqrt(self.x ** 2 + self.y ** 2 + self.z ** 2)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class BlochMeasure:
    """Probability measure on the Bloch ball given by weighted sample points."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.array(self.points, dtype=float, copy=True)
        w = np.array(self.weights, dtype=float, copy=True).reshape(-1)
        if p.ndim != 2 or p.shape != (w.size, 3):
            raise ValueError("points must have shape (K, 3) with one weight each")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if abs(w.sum() - 1) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        if np.any(np.sum(p * p, axis=1) > 1 + BALL_TOL):
            raise ValueError("sample points must lie in the Bloch ball")
        p.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points, self.weights

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def mean(self) -> np.ndarray:
        return self.weights @ self.points


def regime(B: float) -> str:
    """'ordered' (B < 1), 'critical' (B == 1) or 'paramagnetic' (B > 1)."""
    if B < 1:
        return "ordered"
    return "critical" if B == 1 else "paramagnetic"


# ---------------------------------------------------------------------------
# quantum sector
# ---------------------------------------------------------------------------

def _ladder(N: int) -> np.ndarray:
    """<m+1|J_+|m> = sqrt(j(j+1) - m(m+1)) for m = -j .. j-1.

    j(j+1) - m(m+1) = (j - m)(j + m + 1); both factors are integers here, so
    the product is exact before the square root.
    """
    m = np.arange(N) - N / 2
    return np.sqrt((N / 2 - m) * (N / 2 + m + 1))


def build_sector_hamiltonian(p: CWParams) -> SymTridiag:
    """H restricted to j = N/2.

    Diagonal: -2N (m/N)^2 = -2 m^2 / N, minus delta*m for a flea.
    Off-diagonal: -2N B S_x = -2B J_x = -B (J_+ + J_-).
    """
    m = p.m
    diag = -2.0 * m * m / p.N
    if p.flea:
        diag = diag - p.flea * m
    return SymTridiag(diag, -p.B * _ladder(p.N))


def sector_lowest_two(p: CWParams, tol: float = 1e-10) -> EigenPairSet:
    """Two lowest sector eigenpairs.

    Without a flea the m -> -m parity blocks are solved separately, so the
    ground vector is even, the excited one odd with positive weight on
    m > 0, and the gap is resolved far below the 64-bit subtraction floor.
    """
    T = build_sector_hamiltonian(p)
    if p.flea:
        return eig_tridiag_lowest(T, 2, tol)
    return parity_lowest(T, 2, tol)


def cw_gap(p: CWParams, tol: float = 1e-10) -> float:
    """E1 - E0 of the sector matrix (literal first excited state)."""
    return float(sector_lowest_two(p, tol).gap)


def full_space_hamiltonian(p: CWParams) -> np.ndarray:
    """Dense 2^N matrix -(1/2N)(sum sz)^2 - B sum sx - (delta/2) sum sz.

    Used only as an oracle for the sector restriction.
    """
    if p.N > MAX_FULL_SITES:
        raise ValueError(f"full-space oracle limited to N <= {MAX_FULL_SITES}")
    dim = 1 << p.N
    idx = np.arange(dim)
    Mz = np.zeros(dim)
    for k in range(p.N):
        Mz += ((idx >> k) & 1) * 2.0 - 1.0
    H = np.diag(-Mz * Mz / (2 * p.N) - 0.5 * (p.flea or 0.0) * Mz)
    for k in range(p.N):
        H[idx ^ (1 << k), idx] -= p.B
    return H


def full_space_lowest(p: CWParams, k: int = 2) -> np.ndarray:
    return eig_dense_sym(full_space_hamiltonian(p)).energies[:k]


def cat_states_cw(pair: EigenPairSet) -> tuple[SectorState, SectorState]:
    """(Psi0 +- Psi1)/sqrt2; Psi+ is concentrated at z > 0."""
    if pair.k < 2:
        raise ValueError("cat states need the two lowest eigenvectors")
    v0, v1 = pair.vector(0), pair.vector(1).copy()
    m = np.arange(v0.size) - (v0.size - 1) / 2
    if v0 @ (m * v1) < 0:
        v1 = -v1
    return (SectorState.from_vector((v0 + v1) / math.sqrt(2)),
            SectorState.from_vector((v0 - v1) / math.sqrt(2)))


def sz_distribution(v: SectorState) -> BlochMeasure:
    """Law of z = 2m/N in the state, as a measure on the z-axis."""
    N = v.N
    z = 2 * (np.arange(N + 1) - N / 2) / N
    pts = np.column_stack([np.zeros_like(z), np.zeros_like(z), z])
    w = np.abs(v.amplitudes) ** 2
    return BlochMeasure(pts, w / w.sum())


# ---------------------------------------------------------------------------
# classical limit
# ---------------------------------------------------------------------------

def classical_energy(b: BlochPoint, B: float) -> float:
    if not isinstance(b, BlochPoint):
        b = BlochPoint(*b)
    return -(0.5 * b.z * b.z + B * b.x)


def _energy_grid(r, th, ph, B):
    st = np.sin(th)
    x = r * st * np.cos(ph)
    z = r * np.cos(th)
    return -(0.5 * z * z + B * x)


def grid_minimize(B: float, coarse: tuple[int, int, int] = (21, 61, 121),
                  zoom_steps: int = 30) -> list[BlochPoint]:
    """Minimize h over the ball on spherical grids, zooming in on each hemisphere.

    The upper (z >= 0) and lower (z <= 0) halves are searched separately so
    that a symmetric pair of minima is found as two points; results closer
    than 1e-3 to each other are merged, and only those within 1e-9 of the
    best energy are kept.
    """
    found = []
    for lo_th, hi_th in ((0.0, 0.5 * math.pi), (0.5 * math.pi, math.pi)):
        bounds = [(0.0, 1.0), (lo_th, hi_th), (-math.pi, math.pi)]
        sizes = coarse
        best = None
        for _ in range(zoom_steps + 1):
            axes = [np.linspace(a, b, n) for (a, b), n in zip(bounds, sizes)]
            R, TH, PH = np.meshgrid(*axes, indexing="ij")
            E = _energy_grid(R, TH, PH, B)
            i = np.unravel_index(int(np.argmin(E)), E.shape)
            best = (float(E[i]), tuple(float(ax[k]) for ax, k in zip(axes, i)))
            new = []
            for (a, b), ax, k, (dlo, dhi) in zip(bounds, axes, i, ((0.0, 1.0), (lo_th, hi_th), (-math.pi, math.pi))):
                step = ax[1] - ax[0] if ax.size > 1 else 0.0
                c = ax[k]
                new.append((max(dlo, c - 2 * step), min(dhi, c + 2 * step)))
            bounds = new
            sizes = (9, 9, 9)
        e, (r, th, ph) = best
        pt = np.array([r * math.sin(th) * math.cos(ph), r * math.sin(th) * math.sin(ph), r * math.cos(th)])
        found.append((e, pt))
    emin = min(e for e, _ in found)
    keep = []
    for e, pt in found:
        if e > emin + 1e-9:
            continue
        if any(np.linalg.norm(pt - q) < 1e-3 for q in keep):
            continue
        keep.append(pt)
    keep.sort(key=lambda q: -q[2])
    return [BlochPoint(*np.clip(q, -1, 1)) for q in keep]


def classical_ground_states(B: float, verify: bool = True) -> list[BlochPoint]:
    """Minimizers of h: (B, 0, +-sqrt(1-B^2)) for B < 1, else (1, 0, 0).

    With ``verify`` the closed form is checked against :func:`grid_minimize`
    to within 1e-3.
    """
    if not B >= 0:
        raise ValueError("B must be >= 0")
    if B < 1:
        s = math.sqrt(1 - B * B)
        pts = [BlochPoint(B, 0.0, s), BlochPoint(B, 0.0, -s)]
    else:
        pts = [BlochPoint(1.0, 0.0, 0.0)]
    if verify:
        grid = grid_minimize(B)
        # near B = 1 the pair merges below grid resolution
        close = all(min(np.linalg.norm(p.as_array() - g.as_array()) for g in grid) < 1e-3
                    for p in pts)
        if not close:
            raise ArithmeticError(f"closed-form ground states disagree with grid search at B={B}")
    return pts


def lie_poisson_field(B: float):
    def field(u):
        x, y, z = u
        return np.array([2 * y * z, 2 * z * (B - x), -2 * B * y])
    return field


def lie_poisson_flow(x0, B: float, t_end: float, dt: float = 1e-3) -> Trajectory:
    if not isinstance(x0, BlochPoint):
        x0 = BlochPoint(*x0)
    return rk4_integrate(lie_poisson_field(B), x0.as_array(), t_end, dt)


# ---------------------------------------------------------------------------
# coherent states and dynamics
# ---------------------------------------------------------------------------

def spin_coherent_state(b: BlochPoint, N: int) -> SectorState:
    """N-fold product of the pure qubit state with Bloch vector ``b``.

    The qubit state cos(t/2)|up> + e^{i phi} sin(t/2)|down> gives the
    binomial amplitudes sqrt(C(N, k)) cos^k(t/2) (e^{i phi} sin(t/2))^(N-k)
    on m = k - N/2.  Amplitudes are real when y = 0.
    """
    if not isinstance(b, BlochPoint):
        b = BlochPoint(*b)
    if abs(b.radius - 1) > 1e-9:
        raise ValueError(f"spin coherent states need a pure state (|r| = 1), got |r| = {b.radius}")
    if N < 2 or N % 2:
        raise ValueError("N must be an even integer >= 2")
    z = max(-1.0, min(1.0, b.z / b.radius))
    c = math.sqrt(0.5 * (1 + z))
    s = math.sqrt(0.5 * (1 - z))
    k = np.arange(N + 1)
    logc = np.array([math.lgamma(N + 1) - math.lgamma(i + 1) - math.lgamma(N - i + 1) for i in k])
    with np.errstate(divide="ignore"):
        logamp = 0.5 * logc + k * math.log(c) if c > 0 else np.where(k == 0, 0.5 * logc, -np.inf)
        logamp = logamp + ((N - k) * math.log(s) if s > 0 else np.where(k == N, 0.0, -np.inf))
    amp = np.exp(logamp)
    if abs(b.y) > 1e-15:
        phase = np.exp(1j * math.atan2(b.y, b.x) * (N - k))
        amp = amp * phase
    elif b.x < 0:
        amp = amp * (-1.0) ** (N - k)
    return SectorState(amp / np.linalg.norm(amp))


@dataclass(frozen=True)
class SpinTrajectory:
    """Expectations of S = J/N at sampled times, with the state norm at each."""

    times: np.ndarray
    spins: np.ndarray
    norms: np.ndarray


def _expectations(a: np.ndarray, N: int) -> np.ndarray:
    """<J_x>, <J_y>, <J_z> for sector amplitudes ``a`` (columns = samples)."""
    m = (np.arange(N + 1) - N / 2)[:, None]
    jz = np.sum(m * np.abs(a) ** 2, axis=0)
    jp = np.sum(_ladder(N)[:, None] * np.conj(a[1:]) * a[:-1], axis=0)
    return np.vstack([jp.real, jp.imag, jz]).T


def quantum_spin_trajectory(p: CWParams, psi0: SectorState, t_end: float, steps: int) -> SpinTrajectory:
    """Exact evolution by eigendecomposition of the sector matrix.

    Samples at ``steps + 1`` equally spaced times in [0, t_end].
    """
    if psi0.N != p.N:
        raise ValueError(f"state has N={psi0.N}, parameters have N={p.N}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    T = build_sector_hamiltonian(p)
    w, V = np.linalg.eigh(T.to_dense())
    c = V.T @ psi0.amplitudes
    times = np.linspace(0.0, t_end, steps + 1)
    A = V @ (np.exp(-1j * np.outer(w, times)) * c[:, None])
    spins = _expectations(A, p.N) / p.N
    norms = np.sqrt(np.sum(np.abs(A) ** 2, axis=0))
    return SpinTrajectory(times, spins, norms)


@dataclass(frozen=True)
class EgorovComparison:
    times: np.ndarray
    quantum: np.ndarray
    classical: np.ndarray
    error: np.ndarray

    @property
    def max_error(self) -> float:
        return float(self.error.max())


def egorov_comparison(N: int, B: float, start, t_end: float = 2.0, steps: int = 200,
                      dt: float = 1e-3) -> EgorovComparison:
    """Quantum 2<S(t)> from a spin coherent state against the classical flow."""
    if not isinstance(start, BlochPoint):
        start = BlochPoint(*start)
    p = CWParams(N, B)
    q = quantum_spin_trajectory(p, spin_coherent_state(start, N), t_end, steps)
    sub = max(1, math.ceil((t_end / steps) / dt))
    cl = lie_poisson_flow(start, B, t_end, t_end / (steps * sub))
    xc = cl.points[::sub]
    xq = 2 * q.spins
    return EgorovComparison(q.times, xq, xc, np.linalg.norm(xq - xc, axis=1))


def named_start(name: str) -> BlochPoint:
    table = {"north": (0, 0, 1), "south": (0, 0, -1), "east": (1, 0, 0),
             "west": (-1, 0, 0)}
    if name not in table:
        raise ValueError(f"unknown start {name!r}; choose from {sorted(table)}")
    return BlochPoint(*map(float, table[name]))
