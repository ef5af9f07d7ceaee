import math
import warnings

import numpy as np
import pytest

from ssblab import doublewell as dw
from ssblab.limits import mass_in_ball
from ssblab.numerics import trapezoid

UNIT = dict(mass=1.0, lam=1.0, a=1.0)


@pytest.fixture(scope="module")
def pairs():
    out = {}
    for h in (0.5, 0.4, 0.3, 0.2, 0.1):
        p = dw.DoubleWellParams(h)
        g = dw.GridSpec.default(p)
        out[h] = (p, g, dw.lowest_pair(p, g))
    return out


# --- types --------------------------------------------------------------------

@pytest.mark.parametrize("field", ["hbar", "mass", "lam", "a"])
def test_params_must_be_positive(field):
    kw = dict(hbar=0.5, **UNIT)
    kw[field] = 0.0
    with pytest.raises(ValueError):
        dw.DoubleWellParams(**kw)


def test_grid_is_odd_and_centred():
    g = dw.GridSpec(4.0, 2000)
    assert g.points == 2001
    assert g.x[1000] == 0.0
    assert np.allclose(g.x, -g.x[::-1], atol=1e-15)
    with pytest.raises(ValueError):
        dw.GridSpec(1.0, 2)


def test_wavefunction_norm_invariant():
    g = dw.GridSpec(2.0, 11)
    with pytest.raises(ValueError):
        dw.GridWavefunction(np.ones(11), g.dx, g.x)
    psi = dw.GridWavefunction.from_vector(np.ones(11), g)
    assert np.sum(psi.values ** 2) * psi.dx == pytest.approx(1.0, abs=1e-12)


# --- build_hamiltonian ------------------------------------------------------------

def test_potential_values_on_diagonal():
    p = dw.DoubleWellParams(0.5, lam=2.0, a=1.5)
    g = dw.GridSpec(4.5, 7)          # dx = 1.5, grid hits -a, 0, a
    T = build = dw.build_hamiltonian(p, g)
    c = p.hbar ** 2 / (2 * p.mass * g.dx ** 2)
    V = build.diag - 2 * c
    assert V[2] == pytest.approx(0.0, abs=1e-15)
    assert V[4] == pytest.approx(0.0, abs=1e-15)
    assert V[3] == pytest.approx(0.25 * p.lam * p.a ** 4)
    assert T.n == 7


def test_offdiag_is_kinetic_constant():
    p = dw.DoubleWellParams(1.0)
    g = dw.GridSpec(5.0, 5)
    T = dw.build_hamiltonian(p, g)
    assert g.dx == 2.5
    assert np.all(T.offdiag == -1.0 / (2 * 2.5 ** 2))


def test_diag_symmetric_without_flea():
    p = dw.DoubleWellParams(0.3)
    g = dw.GridSpec(3.0, 301)
    d = dw.build_hamiltonian(p, g).diag
    assert np.array_equal(d, d[::-1])
    d2 = dw.build_hamiltonian(p, g, dw.BumpFlea(0.1)).diag
    assert not np.array_equal(d2, d2[::-1])


def test_wells_outside_box_rejected():
    with pytest.raises(ValueError, match="wells outside box"):
        dw.build_hamiltonian(dw.DoubleWellParams(0.5, a=2.0), dw.GridSpec(2.0, 101))


# --- lowest_pair -----------------------------------------------------------------

def test_gap_grid_refinement_oracle():
    p = dw.DoubleWellParams(0.5)
    g = dw.GridSpec(4.0, 2000)
    gap = dw.lowest_pair(p, g).gap
    fine = dw.lowest_pair(p, g.refined()).gap
    assert abs(gap - fine) / fine <= 0.01


def test_energies_second_order_in_dx():
    p = dw.DoubleWellParams(0.3)
    L = 3.0
    E = [dw.lowest_pair(p, dw.GridSpec(L, n)).energies for n in (201, 401, 801)]
    r0 = (E[0][0] - E[1][0]) / (E[1][0] - E[2][0])
    r1 = (E[0][1] - E[1][1]) / (E[1][1] - E[2][1])
    assert 3.5 <= r0 <= 4.5 and 3.5 <= r1 <= 4.5


def test_parities_and_positivity(pairs):
    for h, (p, g, pair) in pairs.items():
        v0, v1 = pair.vector(0), pair.vector(1)
        assert v0 @ v0[::-1] == pytest.approx(1.0, abs=1e-8)
        assert v1 @ v1[::-1] == pytest.approx(-1.0, abs=1e-8)
        assert pair.parities == (1, -1)
        assert np.all(v0 > -1e-12)
        assert pair.energies[0] > 0
        assert pair.gap > 0


def test_coarse_grid_warns():
    p = dw.DoubleWellParams(0.5)
    with pytest.warns(UserWarning, match="a/20"):
        dw.lowest_pair(p, dw.GridSpec(4.0, 51))


def test_identity_gap_agrees_with_difference(pairs):
    for h in (0.5, 0.3):
        p, g, pair = pairs[h]
        assert pair.gap_method == "tunneling-identity"
        assert pair.gap == pytest.approx(pair.energies[1] - pair.energies[0], rel=1e-8)


# --- WKB --------------------------------------------------------------------------

def test_wkb_factor_and_frequency():
    w = dw.wkb_gap(dw.DoubleWellParams(0.3))
    assert w.d_V == pytest.approx(2 / 3, abs=1e-6)
    assert w.omega == pytest.approx(math.sqrt(2))
    x = np.linspace(-1, 1, 20001)
    assert trapezoid(0.5 * (1 - x * x), x[1] - x[0]) == pytest.approx(w.d_V, abs=1e-8)


def test_wkb_prediction_formula():
    p = dw.DoubleWellParams(0.25)
    w = dw.wkb_gap(p)
    expect = p.hbar * math.sqrt(2) / math.sqrt(0.5 * math.e * math.pi) * math.exp(-(2 / 3) / p.hbar)
    assert w.predicted_gap == pytest.approx(expect, rel=1e-8)


def test_doubling_dv_squares_exponential():
    # lam -> 4 lam doubles d_V (sqrt V scales with sqrt lam)
    p1 = dw.DoubleWellParams(0.3)
    p2 = dw.DoubleWellParams(0.3, lam=4.0)
    w1, w2 = dw.wkb_gap(p1), dw.wkb_gap(p2)
    assert w2.d_V == pytest.approx(2 * w1.d_V, rel=1e-10)
    e1 = w1.predicted_gap / (p1.hbar * w1.omega / math.sqrt(0.5 * math.e * math.pi))
    e2 = w2.predicted_gap / (p2.hbar * w2.omega / math.sqrt(0.5 * math.e * math.pi))
    assert e2 == pytest.approx(e1 ** 2, rel=1e-10)


def test_wkb_ratio_band_for_small_hbar(pairs):
    # leading-order WKB band as stated for hbar <= 0.3; see the decisions ledger
    ratios = [pairs[h][2].gap / dw.wkb_gap(pairs[h][0]).predicted_gap for h in (0.3, 0.2, 0.1)]
    assert all(0.5 <= r <= 1.5 for r in ratios), ratios
    dev = [abs(r - 1) for r in ratios]
    assert all(b <= a for a, b in zip(dev, dev[1:])), ratios


def test_gap_exponent_tracks_barrier_action(pairs):
    # the measured decay rate matches sqrt(2m) d_V, the dimensionally consistent action
    hs = (0.5, 0.4, 0.3, 0.2)
    slope = np.polyfit([1 / h for h in hs], [math.log(pairs[h][2].gap) for h in hs], 1)[0]
    S = dw.wkb_gap(dw.DoubleWellParams(0.2)).tunneling_action
    assert slope == pytest.approx(-S, rel=0.05)


def test_gap_fit_slope_against_dv(pairs):
    hs = (0.5, 0.4, 0.3, 0.2)
    slope = np.polyfit([1 / h for h in hs], [math.log(pairs[h][2].gap) for h in hs], 1)[0]
    assert abs(slope - (-2 / 3)) <= 0.15 * (2 / 3), slope


# --- cat states -------------------------------------------------------------------

def test_cat_states_orthogonal_and_reflected(pairs):
    for h in (0.5, 0.2):
        p, g, pair = pairs[h]
        plus, minus = dw.cat_states(pair, g)
        assert abs(plus.inner(minus)) <= 1e-10
        assert np.abs(plus.reflected().values - minus.values).max() * math.sqrt(g.dx) <= 1e-8


def test_plus_state_sits_right(pairs):
    p, g, pair = pairs[0.2]
    plus, minus = dw.cat_states(pair, g)
    assert dw.side_mass(plus, "right") >= 0.95
    assert dw.side_mass(minus, "left") >= 0.95


def test_cat_states_need_two_vectors(pairs):
    p, g, pair = pairs[0.5]
    from ssblab.numerics import EigenPairSet
    one = EigenPairSet(pair.energies[:1], pair.vectors[:, :1], pair.residuals[:1])
    with pytest.raises(ValueError):
        dw.cat_states(one, g)


# --- side_mass --------------------------------------------------------------------

def test_side_mass_even_state(pairs):
    p, g, pair = pairs[0.3]
    psi = dw.eigenstate(pair, g)
    assert dw.side_mass(psi, "left") == pytest.approx(0.5, abs=1e-6)
    assert dw.side_mass(psi, "left") + dw.side_mass(psi, "right") == pytest.approx(1.0, abs=1e-10)


def test_side_mass_point_supported():
    g = dw.GridSpec(2.0, 21)
    v = np.zeros(21)
    v[15] = 1.0
    psi = dw.GridWavefunction.from_vector(v, g)
    assert dw.side_mass(psi, "right") == pytest.approx(1.0)
    with pytest.raises(ValueError):
        dw.side_mass(psi, "up")


def test_strong_flea_localizes_opposite_well(pairs):
    p, g, pair = pairs[0.1]
    pert = dw.lowest_pair(p, g, dw.BumpFlea(100 * pair.gap))
    assert dw.side_mass(dw.eigenstate(pert, g), "left") >= 0.99
    pert = dw.lowest_pair(p, g, dw.BumpFlea(100 * pair.gap, center=-p.a))
    assert dw.side_mass(dw.eigenstate(pert, g), "right") >= 0.99


def test_fixed_flea_works_better_as_hbar_shrinks(pairs):
    masses = []
    for h in (0.5, 0.4, 0.3, 0.2, 0.1):
        p, g, _ = pairs[h]
        psi = dw.eigenstate(dw.lowest_pair(p, g, dw.BumpFlea(1e-3)), g)
        masses.append(max(dw.side_mass(psi, "left"), dw.side_mass(psi, "right")))
    assert all(b >= a for a, b in zip(masses, masses[1:])), masses


# --- Husimi ------------------------------------------------------------------------

def test_husimi_total_mass(pairs):
    p, g, pair = pairs[0.5]
    mu = dw.husimi(dw.eigenstate(pair, g), p)
    assert mu.total_mass == pytest.approx(1.0, abs=0.02)


def test_husimi_of_coherent_state_peaks_at_its_centre():
    p = dw.DoubleWellParams(0.2)
    g = dw.GridSpec.default(p)
    phi = dw.coherent_state(0.0, p.a, p.hbar, g.x)
    psi = dw.GridWavefunction.from_vector(phi, g)
    mu = dw.husimi(psi, p)
    pq = mu.argmax()
    assert abs(pq[0]) <= mu.p_centers[1] - mu.p_centers[0]
    assert abs(pq[1] - p.a) <= mu.q_centers[1] - mu.q_centers[0]


def test_husimi_of_gaussian_matches_closed_form():
    # |<Phi_(p,q), Phi_(0,0)>|^2 = exp(-(p^2 + q^2) / (2 hbar))
    hbar = 0.3
    p = dw.DoubleWellParams(hbar)
    g = dw.GridSpec.default(p)
    psi = dw.GridWavefunction.from_vector(dw.coherent_state(0.0, 0.0, hbar, g.x), g)
    mu = dw.husimi(psi, p)
    P, Q = np.meshgrid(mu.p_centers, mu.q_centers, indexing="ij")
    expect = np.exp(-(P ** 2 + Q ** 2) / (2 * hbar)) * mu.cell_area / (2 * math.pi * hbar)
    assert np.abs(mu.weights - expect).max() <= 1e-8


def test_husimi_resolution_and_window_checks(pairs):
    p, g, pair = pairs[0.5]
    psi = dw.eigenstate(pair, g)
    with pytest.raises(ValueError):
        dw.husimi(psi, p, resolution=(4, 100))
    with pytest.warns(UserWarning, match="window"):
        dw.husimi(psi, p, window=dw.PhaseSpaceWindow(-1, 1, -1, 1), resolution=(16, 16))


def test_husimi_ground_state_ball_mass_small_hbar(pairs):
    p, g, pair = pairs[0.1]
    mu = dw.husimi(dw.eigenstate(pair, g), p)
    right = mass_in_ball(mu, (0.0, 1.0), 0.5)
    left = mass_in_ball(mu, (0.0, -1.0), 0.5)
    assert right == pytest.approx(left, abs=1e-6)
    assert right >= 0.45 and left >= 0.45, (right, left)
