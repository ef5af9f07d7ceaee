"""Numerical kernels shared by the model modules.

Symmetric eigensolvers (Sturm bisection with inverse iteration for
tridiagonal operators, a dense solver, Lanczos with full
reorthogonalization), a classical RK4 integrator and the composite
trapezoid rule.

Everything runs in float64.  Results are frozen dataclasses holding
read-only arrays, so they can be shared freely between threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

EPS = np.finfo(float).eps
DEGENERACY_RTOL = 1e-12
# entries within this fraction of the largest magnitude count as ties
SIGN_TIE_RTOL = 1e-9


class ConvergenceError(RuntimeError):
    """An iterative solver gave up.  ``report`` holds the iteration history."""

    def __init__(self, message: str, report: Optional[dict] = None):
        super().__init__(message)
        self.report = report or {}


class IntegrationError(RuntimeError):
    """The ODE state became non-finite; ``last_time`` is the last good time."""

    def __init__(self, message: str, last_time: float):
        super().__init__(message)
        self.last_time = last_time


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


# ---------------------------------------------------------------------------
# carriers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymTridiag:
    """Real symmetric tridiagonal matrix given by its diagonal and off-diagonal."""

    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        d = _frozen(self.diag)
        e = _frozen(self.offdiag)
        if d.ndim != 1 or d.size < 1:
            raise ValueError("diag must be a non-empty 1-d sequence")
        if e.shape != (d.size - 1,):
            raise ValueError(f"offdiag must have length {d.size - 1}, got {e.size}")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(e))):
            raise ValueError("SymTridiag entries must be finite")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "offdiag", e)

    @property
    def n(self) -> int:
        return self.diag.size

    def gershgorin(self) -> tuple[float, float]:
        r = np.zeros(self.n)
        r[:-1] += np.abs(self.offdiag)
        r[1:] += np.abs(self.offdiag)
        return float(np.min(self.diag - r)), float(np.max(self.diag + r))

    def norm_bound(self) -> float:
        lo, hi = self.gershgorin()
        return max(abs(lo), abs(hi), np.finfo(float).tiny)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        out = self.diag * v
        out[:-1] += self.offdiag * v[1:]
        out[1:] += self.offdiag * v[:-1]
        return out

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    def is_reflection_symmetric(self, rtol: float = 1e-13) -> bool:
        """True if the matrix commutes with the index reversal i -> n-1-i."""
        scale = rtol * self.norm_bound()
        return bool(
            np.all(np.abs(self.diag - self.diag[::-1]) <= scale)
            and np.all(np.abs(self.offdiag - self.offdiag[::-1]) <= scale)
        )


@dataclass(frozen=True)
class DenseSymMatrix:
    entries: np.ndarray

    def __post_init__(self):
        a = _frozen(self.entries)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
        scale = max(float(np.max(np.abs(a))), np.finfo(float).tiny)
        asym = float(np.max(np.abs(a - a.T)))
        if asym > 1e-12 * scale:
            raise ValueError(f"matrix is not symmetric: max |A - A^T| = {asym:.3e}")
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class EigenPairSet:
    """Lowest eigenpairs of a symmetric operator.

    ``vectors`` holds one eigenvector per column.  ``gap`` is E1 - E0; it is
    normally the plain difference but may come from a cancellation-free
    formula, in which case ``gap_method`` says so.  ``degenerate`` lists
    index pairs whose energies coincide to within the 64-bit floor.
    """

    energies: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    gap: Optional[float] = None
    gap_method: str = "difference"
    degenerate: tuple = ()
    parities: Optional[tuple] = None

    def __post_init__(self):
        E = _frozen(self.energies)
        V = _frozen(self.vectors, dtype=np.result_type(self.vectors, float))
        if V.ndim == 1:
            V = _frozen(V[:, None])
        if V.shape[1] != E.size:
            raise ValueError("one eigenvector per energy required")
        object.__setattr__(self, "energies", E)
        object.__setattr__(self, "vectors", V)
        object.__setattr__(self, "residuals", _frozen(self.residuals))
        if self.gap is None and E.size >= 2:
            g = 0.0 if (0, 1) in self.degenerate else max(float(E[1] - E[0]), 0.0)
            object.__setattr__(self, "gap", g)

    @property
    def k(self) -> int:
        return self.energies.size

    def vector(self, i: int) -> np.ndarray:
        return self.vectors[:, i]

    @property
    def is_degenerate(self) -> bool:
        return (0, 1) in self.degenerate

    @property
    def below_resolution(self) -> bool:
        """Gap obtained by subtraction and too small to trust in float64."""
        if self.gap is None or self.gap_method != "difference":
            return False
        return self.gap < DEGENERACY_RTOL * max(abs(float(self.energies[0])), 1.0)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        t = _frozen(self.times)
        p = _frozen(self.points)
        if p.shape[0] != t.size:
            raise ValueError("times and points must have equal lengths")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", p)

    @property
    def final(self) -> np.ndarray:
        return self.points[-1]


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def fix_sign(v: np.ndarray) -> np.ndarray:
    """Flip ``v`` so its largest-magnitude entry is positive (lowest index wins ties)."""
    a = np.abs(v)
    top = a.max()
    if top == 0:
        return v
    i = int(np.argmax(a >= top * (1 - SIGN_TIE_RTOL)))
    return -v if np.real(v[i]) < 0 else v


def _degenerate_pairs(energies: np.ndarray, scale: float) -> tuple:
    tol = DEGENERACY_RTOL * max(scale, 1.0)
    return tuple(
        (i, i + 1) for i in range(energies.size - 1) if abs(energies[i + 1] - energies[i]) < tol
    )


def trapezoid(samples: Sequence[float], dx: float) -> float:
    """Composite trapezoid rule on equally spaced samples."""
    y = np.asarray(samples, dtype=float)
    if y.ndim != 1 or y.size < 2:
        raise ValueError("trapezoid needs at least two samples")
    if not dx > 0:
        raise ValueError("dx must be positive")
    return float(dx * (y.sum() - 0.5 * (y[0] + y[-1])))


# ---------------------------------------------------------------------------
# tridiagonal: Sturm bisection + inverse iteration
# ---------------------------------------------------------------------------

def _sturm_count(d: list, e2: list, x: float, pivmin: float) -> int:
    """Number of eigenvalues strictly below ``x``."""
    q = d[0] - x
    if abs(q) < pivmin:
        q = -pivmin
    count = 1 if q < 0 else 0
    for i in range(1, len(d)):
        q = d[i] - x - e2[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0:
            count += 1
    return count


def _bisect_eigenvalue(d, e2, index, lo, hi, pivmin, abstol) -> float:
    # invariant: count(lo) <= index < count(hi)
    while True:
        mid = 0.5 * (lo + hi)
        if hi - lo <= max(abstol, 2 * EPS * max(abs(lo), abs(hi))) or mid in (lo, hi):
            return mid
        if _sturm_count(d, e2, mid, pivmin) > index:
            hi = mid
        else:
            lo = mid


def _inverse_iteration(T: SymTridiag, lam: float, previous: list, rng, tol: float,
                       max_iter: int = 6, restarts: int = 3):
    n = T.n
    norm = T.norm_bound()
    history = []
    if n == 1:
        return np.ones(1), 0.0
    ab = np.zeros((3, n))
    ab[0, 1:] = T.offdiag
    ab[2, :-1] = T.offdiag
    shift = lam
    for attempt in range(restarts):
        x = rng.standard_normal(n)
        for it in range(max_iter):
            ab[1] = T.diag - shift
            try:
                y = solve_banded((1, 1), ab, x, check_finite=False)
            except LinAlgError:
                # exactly singular: nudge the shift off the eigenvalue
                shift = lam + 4 * EPS * norm * (attempt + 1)
                continue
            for u in previous:
                y -= (u @ y) * u
            nrm = np.linalg.norm(y)
            if not np.isfinite(nrm) or nrm == 0:
                break
            x = y / nrm
            res = float(np.linalg.norm(T.matvec(x) - lam * x))
            history.append({"attempt": attempt, "iteration": it, "residual": res})
            if res <= tol * norm and it >= 1:
                return x, res
        shift = lam + 8 * EPS * norm * (attempt + 1)
    raise ConvergenceError(
        f"inverse iteration did not converge for eigenvalue {lam!r}",
        {"eigenvalue": lam, "tol": tol, "norm": norm, "history": history},
    )


def eig_tridiag_lowest(T: SymTridiag, k: int = 1, tol: float = 1e-10, seed: int = 0) -> EigenPairSet:
    """Lowest ``k`` eigenpairs of a symmetric tridiagonal matrix.

    Eigenvalues come from Sturm-sequence bisection to full working
    precision; eigenvectors from inverse iteration, with Gram-Schmidt
    against already computed vectors of nearby eigenvalues.  Residuals
    satisfy ``||T v - E v|| <= tol * ||T||``.
    """
    n = T.n
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    d = T.diag.tolist()
    e2 = (T.offdiag ** 2).tolist()
    norm = T.norm_bound()
    pivmin = max(np.finfo(float).tiny, np.finfo(float).tiny * max(e2 or [0.0])) * 1e3
    abstol = 2 * EPS * norm
    glo, ghi = T.gershgorin()
    glo -= 2 * EPS * norm + pivmin
    ghi += 2 * EPS * norm + pivmin

    energies = np.empty(k)
    lo = glo
    for i in range(k):
        energies[i] = _bisect_eigenvalue(d, e2, i, lo, ghi, pivmin, abstol)
        lo = max(glo, energies[i] - 4 * abstol)

    rng = np.random.default_rng(seed)
    cluster_tol = 1e-3 * norm
    vectors = np.empty((n, k))
    residuals = np.empty(k)
    cluster: list = []
    for i in range(k):
        if i > 0 and energies[i] - energies[i - 1] > cluster_tol:
            cluster = []
        v, r = _inverse_iteration(T, float(energies[i]), cluster, rng, tol)
        v = fix_sign(v)
        vectors[:, i] = v
        residuals[i] = r
        cluster.append(v)
    return EigenPairSet(energies, vectors, residuals,
                        degenerate=_degenerate_pairs(energies, float(np.max(np.abs(energies)))))


# ---------------------------------------------------------------------------
# dense
# ---------------------------------------------------------------------------

def eig_dense_sym(M: DenseSymMatrix | np.ndarray) -> EigenPairSet:
    """Full spectrum of a dense symmetric matrix, ascending, with fixed signs."""
    if not isinstance(M, DenseSymMatrix):
        M = DenseSymMatrix(np.asarray(M, dtype=float))
    A = M.entries
    w, V = np.linalg.eigh(A)
    V = np.column_stack([fix_sign(V[:, i]) for i in range(V.shape[1])])
    res = np.linalg.norm(A @ V - V * w, axis=0)
    return EigenPairSet(w, V, res, degenerate=_degenerate_pairs(w, float(np.max(np.abs(w)))))


# ---------------------------------------------------------------------------
# Lanczos
# ---------------------------------------------------------------------------

def lanczos_lowest(
    apply: Callable[[np.ndarray], np.ndarray],
    dim: int,
    k: int = 2,
    tol: float = 1e-10,
    seed: int = 0,
    max_iter: Optional[int] = None,
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> EigenPairSet:
    """Lowest ``k`` eigenpairs of a symmetric linear action via Lanczos.

    Every new Lanczos vector is fully reorthogonalized (twice) against the
    basis.  ``project``, if given, is an orthogonal projector commuting with
    ``apply``; it is applied to the start vector and every new direction, so
    the iteration stays inside an invariant subspace such as a parity
    sector.  A vanishing beta triggers a restart with a fresh random
    direction; if no direction survives the projection the subspace has
    been exhausted and the exact result is returned.
    """
    if dim < 1 or not 1 <= k <= dim:
        raise ValueError(f"need 1 <= k <= dim, got k={k}, dim={dim}")
    rng = np.random.default_rng(seed)
    max_iter = dim if max_iter is None else min(max_iter, dim)
    proj = project if project is not None else (lambda x: x)

    def fresh(basis):
        for _ in range(3):
            r = proj(rng.standard_normal(dim))
            for _ in range(2):
                if basis:
                    Q = np.column_stack(basis)
                    r = r - Q @ (Q.T @ r)
            nrm = np.linalg.norm(r)
            if nrm > 1e-8 * math.sqrt(dim):
                return r / nrm
            if not basis:
                continue
            return None
        return None

    q = fresh([])
    if q is None:
        raise ValueError("start vector vanishes under the projection")
    basis = [q]
    alphas: list = []
    betas: list = []
    history = []
    norm_est = 0.0
    exhausted = False
    theta = S = None

    while True:
        w = np.asarray(apply(basis[-1]), dtype=float)
        a = float(basis[-1] @ w)
        alphas.append(a)
        Q = np.column_stack(basis)
        for _ in range(2):
            w = w - Q @ (Q.T @ w)
        w = proj(w)
        b = float(np.linalg.norm(w))
        m = len(alphas)
        T = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
        theta, S = np.linalg.eigh(T)
        norm_est = max(norm_est, float(np.max(np.abs(theta))), abs(a), b)
        nconv = min(k, m)
        est = np.abs(b * S[-1, :nconv]) if m else np.array([])
        history.append({"iteration": m, "beta": b, "ritz": theta[:nconv].tolist()})
        done = m >= k and np.all(est <= tol * max(norm_est, 1e-300) * 0.1)

        if b <= 1e-12 * max(norm_est, 1e-300):
            nxt = fresh(basis)
            if nxt is None:
                exhausted = True
                break
            if done:
                break
            betas.append(0.0)
            basis.append(nxt)
        else:
            if done:
                break
            betas.append(b)
            basis.append(w / b)
        if len(basis) > max_iter:
            basis.pop()
            betas.pop()
            if m >= k:
                break
            raise ConvergenceError("Lanczos exhausted its iteration budget",
                                   {"max_iter": max_iter, "history": history[-5:]})

    m = len(alphas)
    if m < k:
        raise ValueError(f"invariant subspace has dimension {m} < k={k}")
    Q = np.column_stack(basis[:m])
    X = Q @ S[:, :k]
    energies = theta[:k].copy()
    vectors = np.empty((dim, k))
    residuals = np.empty(k)
    for i in range(k):
        x = X[:, i] / np.linalg.norm(X[:, i])
        x = fix_sign(x)
        vectors[:, i] = x
        residuals[i] = np.linalg.norm(np.asarray(apply(x)) - energies[i] * x)
    bad = residuals > tol * max(norm_est, 1e-300)
    if np.any(bad):
        raise ConvergenceError(
            "Lanczos Ritz pairs fail the residual bound",
            {"residuals": residuals.tolist(), "tol": tol, "norm_estimate": norm_est,
             "iterations": m, "exhausted": exhausted, "history": history[-5:]},
        )
    return EigenPairSet(energies, vectors, residuals,
                        degenerate=_degenerate_pairs(energies, norm_est))


# ---------------------------------------------------------------------------
# reflection-symmetric tridiagonal operators
# ---------------------------------------------------------------------------

def reflection_blocks(T: SymTridiag) -> tuple[SymTridiag, SymTridiag]:
    """Split a reflection-symmetric tridiagonal matrix of odd size.

    With centre index c, the even block acts on (e_c, (e_{c+k}+e_{c-k})/sqrt2)
    and the odd block on (e_{c+k}-e_{c-k})/sqrt2, k = 1..c.
    """
    if T.n % 2 == 0 or T.n < 3:
        raise ValueError("reflection blocks need an odd dimension >= 3")
    if not T.is_reflection_symmetric():
        raise ValueError("matrix does not commute with index reversal")
    c = T.n // 2
    e_even = T.offdiag[c:].copy()
    e_even[0] *= math.sqrt(2.0)
    even = SymTridiag(T.diag[c:], e_even)
    odd = SymTridiag(T.diag[c + 1:], T.offdiag[c + 1:])
    return even, odd


def lift_even(u: np.ndarray) -> np.ndarray:
    c = u.size - 1
    out = np.empty(2 * c + 1, dtype=u.dtype)
    out[c] = u[0]
    out[c + 1:] = u[1:] / math.sqrt(2.0)
    out[:c] = u[1:][::-1] / math.sqrt(2.0)
    return out


def lift_odd(w: np.ndarray) -> np.ndarray:
    c = w.size
    out = np.empty(2 * c + 1, dtype=w.dtype)
    out[c] = 0.0
    out[c + 1:] = w / math.sqrt(2.0)
    out[:c] = -w[::-1] / math.sqrt(2.0)
    return out


def _log_inner_ratio(block: SymTridiag, energy: float, stop: int) -> float:
    """log(v[0] / v[stop]) for the nodeless eigenvector of ``block`` at ``energy``.

    The ratios v[m]/v[m+1] follow from the rows of the eigen-equation read
    from the inner end outwards; this direction is the growing one under a
    tunneling barrier, so the continued fraction is stable.
    """
    d, e = block.diag, block.offdiag
    r = -e[0] / (d[0] - energy)
    if not r > 0:
        raise ArithmeticError("ratio recurrence left the nodeless branch")
    total = math.log(r)
    for m in range(1, stop):
        r = -e[m] / (d[m] - energy + e[m - 1] * r)
        if not r > 0:
            raise ArithmeticError("ratio recurrence left the nodeless branch")
        total += math.log(r)
    return total


def tunneling_gap(even: SymTridiag, e_even: float, v_even: np.ndarray,
                  odd: SymTridiag, e_odd: float, v_odd: np.ndarray) -> float:
    """Odd-minus-even ground energy from the eigenvectors, free of cancellation.

    Subtracting the block rows m >= 1 of the two eigen-equations leaves

        E_odd - E_even = -c * phi_0 * chi_1 / sum_{m>=1} phi_m chi_m,

    where c is the even block's centre coupling, phi the even and chi the
    odd ground vector.  phi_0 and chi_1 are exponentially small across a
    barrier; they are rebuilt from the ratio recurrence so they keep full
    relative accuracy even when the gap is far below float64 resolution
    of the energies themselves.
    """
    kp = int(np.argmax(v_even))
    ko = int(np.argmax(v_odd))
    if kp == 0 or ko == 0:
        raise ArithmeticError("no barrier between the centre and the wells")
    phi0 = v_even[kp] * math.exp(_log_inner_ratio(even, e_even, kp))
    chi1 = v_odd[ko] * math.exp(_log_inner_ratio(odd, e_odd, ko))
    overlap = float(v_even[1:] @ v_odd)
    return -even.offdiag[0] * phi0 * chi1 / overlap


def parity_lowest(T: SymTridiag, k: int = 2, tol: float = 1e-10) -> EigenPairSet:
    """Lowest ``k`` eigenpairs of a reflection-symmetric tridiagonal matrix.

    Each parity block is diagonalized separately, so the returned vectors
    are exact parity eigenvectors (labels in ``parities``) even when the
    doublet is degenerate to machine precision.  Odd vectors are oriented
    positive on the upper half (index > centre).  When the lowest two
    states are the even and odd block ground states, the gap is taken from
    :func:`tunneling_gap`.
    """
    even, odd = reflection_blocks(T)
    ke = min(k, even.n)
    ko = min(k, odd.n)
    pe = eig_tridiag_lowest(even, ke, tol)
    po = eig_tridiag_lowest(odd, ko, tol)

    entries = [(float(pe.energies[i]), 0, +1, i) for i in range(ke)]
    entries += [(float(po.energies[i]), 1, -1, i) for i in range(ko)]
    # parity +1 first among numerically tied energies
    entries.sort(key=lambda t: (t[0], t[1]))
    entries = entries[:k]

    energies = np.array([t[0] for t in entries])
    vectors = np.empty((T.n, len(entries)))
    residuals = np.empty(len(entries))
    for j, (_, blk, _, i) in enumerate(entries):
        src = pe if blk == 0 else po
        vectors[:, j] = lift_even(src.vector(i)) if blk == 0 else lift_odd(src.vector(i))
        residuals[j] = np.linalg.norm(T.matvec(vectors[:, j]) - energies[j] * vectors[:, j])
    parities = tuple(t[2] for t in entries)

    gap = None
    method = "difference"
    degenerate = _degenerate_pairs(energies, float(np.max(np.abs(energies))))
    if len(entries) >= 2 and entries[0][1:] == (0, +1, 0) and entries[1][1:] == (1, -1, 0):
        try:
            g = tunneling_gap(even, pe.energies[0], pe.vector(0), odd, po.energies[0], po.vector(0))
        except (ArithmeticError, ValueError, OverflowError):
            g = None
        if g is not None and np.isfinite(g) and g > 0:
            gap, method = float(g), "tunneling-identity"
            degenerate = tuple(p for p in degenerate if p != (0, 1))
        elif even.offdiag[0] == 0 and abs(energies[1] - energies[0]) == 0:
            gap = 0.0
    return EigenPairSet(energies, vectors, residuals, gap=gap, gap_method=method,
                        degenerate=degenerate, parities=parities)


# ---------------------------------------------------------------------------
# ODE
# ---------------------------------------------------------------------------

def rk4_integrate(field: Callable[[np.ndarray], np.ndarray], x0, t_end: float, dt: float) -> Trajectory:
    """Classical fourth-order Runge-Kutta for an autonomous field.

    Samples every step including t=0 and t_end; if ``dt`` does not divide
    ``t_end`` the last step is shortened to land on it exactly.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not t_end >= 0:
        raise ValueError("t_end must be non-negative")
    x = np.array(x0, dtype=float).reshape(-1)
    nfull = t_end / dt
    nsteps = int(round(nfull)) if abs(nfull - round(nfull)) < 1e-9 * max(1.0, nfull) else int(math.ceil(nfull))
    times = np.empty(nsteps + 1)
    points = np.empty((nsteps + 1, x.size))
    times[0] = 0.0
    points[0] = x
    t = 0.0
    for i in range(1, nsteps + 1):
        h = dt if i < nsteps else t_end - t
        k1 = np.asarray(field(x), dtype=float)
        k2 = np.asarray(field(x + 0.5 * h * k1), dtype=float)
        k3 = np.asarray(field(x + 0.5 * h * k2), dtype=float)
        k4 = np.asarray(field(x + h * k3), dtype=float)
        xn = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(xn)):
            raise IntegrationError(f"non-finite state after t={t!r}", last_time=t)
        x = xn
        t = t_end if i == nsteps else i * dt
        times[i] = t
        points[i] = x
    return Trajectory(times, points)
