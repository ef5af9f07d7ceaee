"""Open transverse-field Ising chain H = -sum sz_i sz_{i+1} - B sum sx_i.

States live on the 2^N spin configurations.  Basis index ``s`` encodes a
configuration by its bits: bit j set means spin j points up (sz_j = +1).
Flipping every spin is then index reversal, ``v[::-1]``.

A flea is a longitudinal field -delta * sz_{i0} on one site; positive
delta favours spin up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .limits import DiscreteMeasure
from .numerics import (EPS, EigenPairSet, _bisect_eigenvalue, eig_dense_sym,
                       lanczos_lowest)

MAX_ED_SITES = 20


@dataclass(frozen=True)
class SiteFlea:
    site: int = 0
    strength: float = 0.0


@dataclass(frozen=True)
class IsingParams:
    N: int
    B: float
    flea: Optional[SiteFlea] = None

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 2, got {self.N!r}")
        if not (np.isfinite(self.B) and self.B >= 0):
            raise ValueError(f"B must be a finite number >= 0, got {self.B!r}")
        if self.flea is not None and not 0 <= self.flea.site < self.N:
            raise ValueError(f"flea site {self.flea.site} outside the chain 0..{self.N - 1}")

    @property
    def dim(self) -> int:
        return 1 << self.N


@dataclass(frozen=True)
class BdGSpectrum:
    single_fermion_energies: np.ndarray


@lru_cache(maxsize=32)
def _spin_table(N: int) -> np.ndarray:
    """sz eigenvalues, shape (N, 2^N), read-only."""
    idx = np.arange(1 << N)
    sz = np.stack([((idx >> j) & 1) * 2.0 - 1.0 for j in range(N)])
    sz.flags.writeable = False
    return sz


@lru_cache(maxsize=32)
def _bond_diagonal(N: int) -> np.ndarray:
    sz = _spin_table(N)
    zz = -np.sum(sz[:-1] * sz[1:], axis=0)
    zz.flags.writeable = False
    return zz


def ising_matvec(p: IsingParams, v: np.ndarray) -> np.ndarray:
    """Apply the chain Hamiltonian (with flea, if any) to ``v``."""
    v = np.asarray(v)
    if v.shape != (p.dim,):
        raise ValueError(f"state has shape {v.shape}, expected ({p.dim},)")
    out = _bond_diagonal(p.N) * v
    if p.B:
        idx = np.arange(p.dim)
        for j in range(p.N):
            out -= p.B * v[idx ^ (1 << j)]
    if p.flea is not None and p.flea.strength:
        out -= p.flea.strength * _spin_table(p.N)[p.flea.site] * v
    return out


def dense_hamiltonian(p: IsingParams) -> np.ndarray:
    """Full matrix, for oracles at small N."""
    eye = np.eye(p.dim)
    return np.column_stack([ising_matvec(p, eye[:, i]) for i in range(p.dim)])


def parity_apply(v: np.ndarray) -> np.ndarray:
    """Global spin flip (product of all sx): amplitude at s moves to -s."""
    return np.asarray(v)[::-1].copy()


def _sector_projector(sign: int):
    return lambda v: 0.5 * (v + sign * v[::-1])


def ed_lowest_two(p: IsingParams, tol: float = 1e-10, seed: int = 0) -> EigenPairSet:
    """Two lowest eigenpairs by Lanczos on the matvec.

    Without a flea the even and odd spin-flip sectors are diagonalized
    separately and merged, which keeps exponentially small gaps resolved
    and gives exact parity labels.  The odd vector is oriented so that the
    total magnetization couples the pair positively; Psi+ then has
    positive magnetization.
    """
    if p.N > MAX_ED_SITES:
        raise ValueError(f"N={p.N} exceeds the exact-diagonalization guard "
                         f"({MAX_ED_SITES}); use bdg_gap for the gap")
    apply = lambda v: ising_matvec(p, v)
    if p.flea is not None and p.flea.strength:
        return lanczos_lowest(apply, p.dim, 2, tol, seed)

    half = p.dim // 2
    found = []
    for sign in (+1, -1):
        k = min(2, half)
        res = lanczos_lowest(apply, p.dim, k, tol, seed, project=_sector_projector(sign))
        found += [(float(res.energies[i]), -sign, res.vector(i), float(res.residuals[i]))
                  for i in range(k)]
    found.sort(key=lambda t: t[0])
    scale = max(abs(found[0][0]), 1.0)
    if abs(found[1][0] - found[0][0]) < 1e-12 * scale and found[1][1] < found[0][1]:
        found[0], found[1] = found[1], found[0]
    found = found[:2]
    E = np.array([f[0] for f in found])
    V = np.column_stack([f[2] for f in found])
    M = _spin_table(p.N).sum(axis=0)
    if V[:, 0] @ (M * V[:, 1]) < 0:
        V[:, 1] = -V[:, 1]
    degenerate = ((0, 1),) if abs(E[1] - E[0]) < 1e-12 * scale else ()
    return EigenPairSet(E, V, [f[3] for f in found], degenerate=degenerate,
                        parities=tuple(-f[1] for f in found))


def bdg_matrix(p: IsingParams) -> np.ndarray:
    """2N x 2N Bogoliubov-de Gennes matrix [[A, Bp], [-Bp, -A]].

    Jordan-Wigner with sx_i = 1 - 2 n_i and
    sz_i sz_{i+1} = (c_i^+ - c_i)(c_{i+1}^+ + c_{i+1}) turns the chain into
    sum c^+ A c + (1/2) sum (c^+ Bp c^+ + h.c.) with A = 2B on the
    diagonal, -1 on the bonds, and antisymmetric pairing Bp_{i,i+1} = -1.
    """
    N = p.N
    A = np.diag(np.full(N, 2.0 * p.B)) - np.diag(np.ones(N - 1), 1) - np.diag(np.ones(N - 1), -1)
    Bp = -np.diag(np.ones(N - 1), 1) + np.diag(np.ones(N - 1), -1)
    return np.block([[A, Bp], [-Bp, -A]])


def _smallest_mode(p: IsingParams) -> float:
    """Smallest singular value of A + Bp to high relative accuracy.

    The single-fermion energies are the singular values of A + Bp, here the
    upper bidiagonal matrix with 2B on the diagonal and -2 above it.  They
    are the positive eigenvalues of the zero-diagonal tridiagonal matrix
    with off-diagonal (2B, -2, 2B, ..., 2B) (Golub-Kahan form), and
    Sturm bisection on that form keeps relative accuracy even when the
    mode is exponentially small in N.
    """
    N = p.N
    off = np.empty(2 * N - 1)
    off[0::2] = 2 * p.B
    off[1::2] = -2.0
    bound = 2 * p.B + 2.0 + 1.0
    e2 = off ** 2
    tiny = np.finfo(float).tiny
    pivmin = tiny * 1e3 * max(float(e2.max()), 1.0)
    return _bisect_eigenvalue([0.0] * (2 * N), e2.tolist(), N, -bound, bound, pivmin, tiny)


def bdg_gap(p: IsingParams) -> tuple[float, BdGSpectrum]:
    """Lowest single-fermion energy, which is the many-body gap of the open chain.

    The full spectrum comes from a dense eigensolve of :func:`bdg_matrix`;
    its lowest entry, which dense solvers only get to absolute accuracy
    EPS * ||BdG||, is replaced by the bisection value of
    :func:`_smallest_mode`.
    """
    if p.flea is not None and p.flea.strength:
        raise ValueError("bdg_gap: a longitudinal flea field is not quadratic in the "
                         "Jordan-Wigner fermions")
    w = eig_dense_sym(bdg_matrix(p)).energies
    eps = np.clip(np.sort(w[p.N:]), 0.0, None)
    low = max(_smallest_mode(p), 0.0)
    if abs(low - eps[0]) > 64 * EPS * (2 * p.B + 2):
        raise ArithmeticError(f"bisection and dense BdG disagree: {low!r} vs {eps[0]!r}")
    eps[0] = low
    eps.flags.writeable = False
    return float(low), BdGSpectrum(eps)


def asymptotic_gap(p: IsingParams) -> float:
    """(1 - B^2) B^N, the large-N splitting law for the ordered phase."""
    if not 0 < p.B < 1:
        raise ValueError(f"formula valid for 0<B<1, got B={p.B}")
    return (1 - p.B ** 2) * p.B ** p.N


def magnetization_profile(v: np.ndarray) -> np.ndarray:
    """<sz_i> for each site of a normalized state."""
    v = np.asarray(v)
    N = int(round(math.log2(v.size)))
    if 1 << N != v.size:
        raise ValueError("state length must be a power of two")
    prob = np.abs(v) ** 2
    return _spin_table(N) @ prob / prob.sum()


def cat_states_ising(pair: EigenPairSet) -> tuple[np.ndarray, np.ndarray]:
    """(Psi0 +- Psi1)/sqrt2; Psi+ carries the positive magnetization."""
    if pair.k < 2:
        raise ValueError("cat states need the two lowest eigenvectors")
    v0, v1 = pair.vector(0).copy(), pair.vector(1).copy()
    N = int(round(math.log2(v0.size)))
    M = _spin_table(N).sum(axis=0)
    if v0 @ (M * v1) < 0:
        v1 = -v1
    plus = (v0 + v1) / math.sqrt(2)
    minus = (v0 - v1) / math.sqrt(2)
    return plus / np.linalg.norm(plus), minus / np.linalg.norm(minus)


def order_parameter_distribution(v: np.ndarray) -> DiscreteMeasure:
    """Law of the mean magnetization (1/N) sum sz_i in the state ``v``."""
    v = np.asarray(v)
    N = int(round(math.log2(v.size)))
    M = _spin_table(N).sum(axis=0)
    prob = np.abs(v) ** 2
    prob = prob / prob.sum()
    levels = np.arange(-N, N + 1, 2)
    weights = np.array([prob[M == m].sum() for m in levels])
    return DiscreteMeasure(levels / N, weights)


def spontaneous_magnetization(B: float) -> float:
    """Bulk order parameter (1 - B^2)^(1/8) of the infinite chain for B < 1."""
    return (1 - B * B) ** 0.125 if B < 1 else 0.0


def flea_matrix_elements(p: IsingParams, plus: np.ndarray, minus: np.ndarray) -> tuple[float, float]:
    """Diagonal entries (delta_+, delta_-) of the two-level model for the flea of ``p``.

    The effective matrix carries a factor 1/2, so delta_pm = 2 <Psi_pm|F|Psi_pm>
    with F = -delta sz_{i0}.
    """
    if p.flea is None:
        return 0.0, 0.0
    sz = _spin_table(p.N)[p.flea.site]
    f = -p.flea.strength * sz
    return 2 * float(plus @ (f * plus)), 2 * float(minus @ (f * minus))
