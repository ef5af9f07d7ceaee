import math
from functools import reduce

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from ssblab import curieweiss as cw
from ssblab.limits import mass_in_ball

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SZ = np.diag([-1.0, 1.0])


def kron_cw(N, B):
    """-(1/2N)(sum sz)^2 - B sum sx from Pauli Kronecker products."""
    def op(single, j):
        mats = [np.eye(2)] * N
        mats[j] = single
        return reduce(np.kron, mats)
    Mz = sum(op(SZ, j) for j in range(N))
    Mx = sum(op(SX, j) for j in range(N))
    return -(Mz @ Mz) / (2 * N) - B * Mx


def mp_gap(N, B, dps=80):
    """E1 - E0 of the sector matrix by high-precision Sturm bisection."""
    with mp.workdps(dps):
        B = mp.mpf(B)
        j = mp.mpf(N) / 2
        m = [mp.mpf(i) - j for i in range(N + 1)]
        d = [-2 * x * x / N for x in m]
        e2 = [B * B * (j - m[i]) * (j + m[i] + 1) for i in range(N)]

        def count(x):
            c, q = 0, d[0] - x
            c += q < 0
            for i in range(1, N + 1):
                q = d[i] - x - e2[i - 1] / q
                c += q < 0
            return c

        def kth(k):
            lo, hi = mp.mpf(-4 * N) - mp.mpf(1) / 7, mp.mpf(4 * N)
            for _ in range(int(dps * 3.5) + 40):
                mid = (lo + hi) / 2
                if count(mid) > k:
                    hi = mid
                else:
                    lo = mid
            return (lo + hi) / 2
        return float(kth(1) - kth(0))


# --- types ----------------------------------------------------------------------------

def test_params_validation():
    with pytest.raises(ValueError, match="even"):
        cw.CWParams(5, 0.5)
    with pytest.raises(ValueError):
        cw.CWParams(4, -1.0)


def test_bloch_point_must_lie_in_ball():
    cw.BlochPoint(0.6, 0.0, 0.8)
    with pytest.raises(ValueError):
        cw.BlochPoint(1.0, 0.1, 0.0)


def test_bloch_measure_weights_sum_to_one():
    with pytest.raises(ValueError):
        cw.BlochMeasure([[0, 0, 1], [0, 0, -1]], [0.5, 0.4])


def test_sector_state_norm():
    with pytest.raises(ValueError):
        cw.SectorState([1.0, 1.0, 0.0])


# --- sector matrix ------------------------------------------------------------------------

def test_sector_matrix_zero_field():
    T = cw.build_sector_hamiltonian(cw.CWParams(2, 0.0))
    assert np.array_equal(T.diag, [-1.0, 0.0, -1.0])
    assert np.array_equal(T.offdiag, [0.0, 0.0])
    pair = cw.sector_lowest_two(cw.CWParams(2, 0.0))
    assert pair.is_degenerate and pair.gap == 0.0


def test_sector_matrix_symmetric_and_reflection_invariant():
    T = cw.build_sector_hamiltonian(cw.CWParams(40, 0.7))
    assert T.is_reflection_symmetric(rtol=0.0)
    D = T.to_dense()
    assert np.array_equal(D, D.T)


def test_sector_flea_convention():
    T = cw.build_sector_hamiltonian(cw.CWParams(4, 0.0, flea=0.1))
    assert T.diag[-1] < T.diag[0]        # m = +2 favoured for positive delta


@pytest.mark.parametrize("N", [6, 8, 10])
@pytest.mark.parametrize("B", [0.3, 0.7])
def test_sector_matches_full_space(N, B):
    full = np.linalg.eigvalsh(kron_cw(N, B))[:2]
    sector = cw.sector_lowest_two(cw.CWParams(N, B)).energies
    assert np.abs(full - sector).max() <= 1e-9


def test_module_full_space_oracle_matches_kron():
    assert np.allclose(cw.full_space_hamiltonian(cw.CWParams(6, 0.4)), kron_cw(6, 0.4), atol=1e-14)
    with pytest.raises(ValueError):
        cw.full_space_hamiltonian(cw.CWParams(14, 0.5))


def test_sector_flea_matches_full_space():
    p = cw.CWParams(8, 0.5, flea=0.05)
    w = cw.full_space_lowest(p)
    assert np.abs(cw.sector_lowest_two(p).energies - w).max() <= 1e-9


def test_parity_of_sector_eigenvectors():
    pair = cw.sector_lowest_two(cw.CWParams(60, 0.5))
    v0, v1 = pair.vector(0), pair.vector(1)
    assert np.abs(v0 - v0[::-1]).max() <= 1e-9
    assert np.abs(v1 + v1[::-1]).max() <= 1e-9


# --- gap -------------------------------------------------------------------------------

def test_gap_decreases_with_N():
    assert cw.cw_gap(cw.CWParams(60, 0.5)) < cw.cw_gap(cw.CWParams(50, 0.5))


@pytest.mark.parametrize("N", [20, 60, 120, 200])
def test_gap_against_high_precision_oracle(N):
    got = cw.cw_gap(cw.CWParams(N, 0.5))
    assert got == pytest.approx(mp_gap(N, 0.5), rel=1e-9)


def test_gap_exponential_fit():
    Ns = np.arange(40, 201, 20)
    logs = np.log([cw.cw_gap(cw.CWParams(int(N), 0.5)) for N in Ns])
    slope, icpt = np.polyfit(Ns, logs, 1)
    resid = logs - (slope * Ns + icpt)
    r2 = 1 - resid.var() / logs.var()
    assert slope < 0 and r2 >= 0.99


def test_paramagnetic_gap_open():
    assert cw.cw_gap(cw.CWParams(100, 1.5)) >= 0.1
    assert cw.regime(1.5) == "paramagnetic" and cw.regime(1.0) == "critical"


# --- classical energy and minima ------------------------------------------------------------

def test_classical_energy_values():
    assert cw.classical_energy(cw.BlochPoint(0.6, 0, 0.8), 0.6) == pytest.approx(-0.68)
    assert cw.classical_energy(cw.BlochPoint(1, 0, 0), 0.3) == -0.3
    assert cw.classical_energy(cw.BlochPoint(0, 0, 0), 2.0) == 0.0
    with pytest.raises(ValueError):
        cw.classical_energy((1.0, 1.0, 0.0), 0.5)


def test_classical_ground_states_closed_form():
    a, b = cw.classical_ground_states(0.6)
    assert (a.x, a.y, a.z) == pytest.approx((0.6, 0.0, 0.8))
    assert (b.x, b.y, b.z) == pytest.approx((0.6, 0.0, -0.8))
    a, b = cw.classical_ground_states(0.0)
    assert (a.z, b.z) == (1.0, -1.0)
    (c,) = cw.classical_ground_states(1.5)
    assert (c.x, c.y, c.z) == (1.0, 0.0, 0.0)


@pytest.mark.parametrize("B", [0.0, 0.3, 0.6, 0.9, 1.5, 3.0])
def test_grid_minimizer_finds_closed_form(B):
    grid = cw.grid_minimize(B)
    exact = cw.classical_ground_states(B, verify=False)
    assert len(grid) == len(exact)
    for e, g in zip(exact, grid):
        assert np.linalg.norm(e.as_array() - g.as_array()) <= 1e-3
        assert cw.classical_energy(g, B) == pytest.approx(cw.classical_energy(e, B), abs=1e-6)


# --- flow ---------------------------------------------------------------------------------

def test_initial_velocity():
    f = cw.lie_poisson_field(0.5)
    assert np.array_equal(f(np.array([0.0, 0.0, 1.0])), [0.0, 1.0, 0.0])


def test_ground_state_is_stationary():
    for g in cw.classical_ground_states(0.5, verify=False):
        tr = cw.lie_poisson_flow(g, 0.5, 10.0, 1e-3)
        assert np.abs(tr.points - tr.points[0]).max() <= 1e-8


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), B=st.floats(0.0, 2.0))
def test_flow_conserves_energy_and_radius(seed, B):
    r = np.random.default_rng(seed)
    u = r.normal(size=3)
    u *= r.uniform(0.1, 1.0) / np.linalg.norm(u)
    tr = cw.lie_poisson_flow(cw.BlochPoint(*u), B, 10.0, 1e-3)
    P = tr.points
    h = -(0.5 * P[:, 2] ** 2 + B * P[:, 0])
    rad = np.linalg.norm(P, axis=1)
    assert np.abs(h - h[0]).max() <= 1e-8
    assert np.abs(rad - rad[0]).max() <= 1e-8


def test_flow_against_scipy():
    f = cw.lie_poisson_field(0.5)
    tr = cw.lie_poisson_flow((0.0, 0.0, 1.0), 0.5, 2.0, 1e-3)
    ref = solve_ivp(lambda t, u: f(u), (0, 2), [0, 0, 1], method="DOP853", rtol=1e-12, atol=1e-12)
    assert np.allclose(tr.final, ref.y[:, -1], atol=1e-10)


# --- coherent states and dynamics ------------------------------------------------------------

def test_coherent_poles():
    n = cw.spin_coherent_state(cw.BlochPoint(0, 0, 1), 6).amplitudes
    s = cw.spin_coherent_state(cw.BlochPoint(0, 0, -1), 6).amplitudes
    assert n[-1] == 1.0 and np.abs(n[:-1]).max() == 0.0
    assert s[0] == 1.0 and np.abs(s[1:]).max() == 0.0


def test_coherent_equator_two_spins():
    a = cw.spin_coherent_state(cw.BlochPoint(1, 0, 0), 2).amplitudes
    assert np.allclose(a, [0.5, 1 / math.sqrt(2), 0.5])


@pytest.mark.parametrize("b", [(0.6, 0.0, 0.8), (0.0, 1.0, 0.0), (-0.48, 0.6, -0.64)])
def test_coherent_state_mean_spin(b):
    N = 30
    psi = cw.spin_coherent_state(cw.BlochPoint(*b), N)
    q = cw.quantum_spin_trajectory(cw.CWParams(N, 0.0), psi, 0.0, 1)
    assert np.allclose(2 * q.spins[0], b, atol=1e-12)


def test_coherent_rejects_mixed_state():
    with pytest.raises(ValueError, match="pure"):
        cw.spin_coherent_state(cw.BlochPoint(0.5, 0, 0), 4)


def test_eigenstate_expectations_constant():
    p = cw.CWParams(20, 0.5)
    v = cw.SectorState.from_vector(cw.sector_lowest_two(p).vector(0))
    q = cw.quantum_spin_trajectory(p, v, 3.0, 30)
    assert np.abs(q.spins - q.spins[0]).max() <= 1e-12


def test_evolution_norm_conserved():
    p = cw.CWParams(50, 0.5)
    q = cw.quantum_spin_trajectory(p, cw.spin_coherent_state(cw.BlochPoint(0, 0, 1), 50), 2.0, 100)
    assert np.abs(q.norms - 1).max() <= 1e-12


def test_trajectory_dimension_check():
    with pytest.raises(ValueError):
        cw.quantum_spin_trajectory(cw.CWParams(10, 0.5), cw.spin_coherent_state((0, 0, 1), 8), 1.0, 10)


def test_egorov_componentwise_error_at_most_half():
    e50 = cw.egorov_comparison(50, 0.5, (0, 0, 1))
    e100 = cw.egorov_comparison(100, 0.5, (0, 0, 1))
    d50 = np.abs(e50.quantum - e50.classical).max(axis=0)
    d100 = np.abs(e100.quantum - e100.classical).max(axis=0)
    assert np.all(d100 <= 0.5 * d50)


def test_egorov_error_ratio_band():
    errs = [cw.egorov_comparison(N, 0.5, (0, 0, 1)).max_error for N in (50, 100, 200)]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(1.5 <= r <= 3.0 for r in ratios)


# --- order parameter distribution --------------------------------------------------------------

def test_distribution_point_mass_at_north():
    mu = cw.sz_distribution(cw.spin_coherent_state(cw.BlochPoint(0, 0, 1), 10))
    assert mass_in_ball(mu, (0, 0, 1), 1e-9) == 1.0


@pytest.fixture(scope="module")
def pair_100():
    return cw.sector_lowest_two(cw.CWParams(100, 0.5))


def test_ground_state_two_lobes(pair_100):
    mu = cw.sz_distribution(cw.SectorState.from_vector(pair_100.vector(0)))
    s = math.sqrt(0.75)
    assert mass_in_ball(mu, (0, 0, s), 0.15) >= 0.4
    assert mass_in_ball(mu, (0, 0, -s), 0.15) >= 0.4
    assert abs(mu.mean()[2]) <= 1e-9


def test_cat_means_approach_classical_points():
    s = math.sqrt(0.75)
    dev = []
    for N in (20, 50, 100, 200):
        plus, minus = cw.cat_states_cw(cw.sector_lowest_two(cw.CWParams(N, 0.5)))
        zp = cw.sz_distribution(plus).mean()[2]
        zm = cw.sz_distribution(minus).mean()[2]
        assert zp == pytest.approx(-zm, abs=1e-12)
        dev.append(abs(zp - s))
    assert all(b < a for a, b in zip(dev, dev[1:]))


def test_collective_flea_selects_one_lobe():
    # N=40 keeps 10 * gap ~ 1e-6 well above the 64-bit floor of the sector energies
    N, B = 40, 0.5
    gap = cw.cw_gap(cw.CWParams(N, B))
    s = math.sqrt(1 - B * B)
    for sign in (+1, -1):
        pair = cw.sector_lowest_two(cw.CWParams(N, B, flea=sign * 10 * gap))
        mu = cw.sz_distribution(cw.SectorState.from_vector(pair.vector(0)))
        assert mass_in_ball(mu, (0, 0, sign * s), 0.15) >= 0.9
