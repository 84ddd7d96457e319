import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from pairspec import density, dispersion, oracle, spectrum
from pairspec.errors import InputError, RegimeError

# E_g = (1/2pi) int_0^inf log D(-e0^2 - y^2) dy, evaluated with mpmath at 30 digits;
# in the bound regime this integral gives the bottom of the spectrum E_g - E_b.
ENERGY_BY_LOG_D = {
    0.5: 0.119721389314632176934674801016,
    1.0: 0.230501094082732175842196843681,
    -1.0: -0.279139494569719719480767499178,
}
BOTTOM_AT_MINUS_2 = -0.673306757848714946781428346812
BETA_AT_MINUS_2 = 0.804774933159013401658092865442
E_B_AT_MINUS_2 = 0.108748560738141590038597113085


@pytest.mark.parametrize("lam", sorted(ENERGY_BY_LOG_D))
def test_ground_energy_against_log_determinant_route(canon, canon_cc, lam):
    res = spectrum.ground_energy_with_error(canon, lam, cc=canon_cc)
    assert res.value == pytest.approx(ENERGY_BY_LOG_D[lam], rel=1e-9)
    assert res.abs_err < 1e-9


def test_ground_energy_zero_coupling(canon):
    assert spectrum.ground_energy(canon, 0.0) == 0.0


@pytest.mark.parametrize("lam", [-2.0, -3.0, -1.5657504413736735])
def test_ground_energy_regime(canon, canon_cc, lam):
    with pytest.raises(RegimeError):
        spectrum.ground_energy_with_error(canon, lam, cc=canon_cc)


def test_bound_state_against_high_precision(canon, canon_cc):
    bs = spectrum.bound_state(canon, -2.0, cc=canon_cc)
    assert bs.beta == pytest.approx(BETA_AT_MINUS_2, rel=1e-12)
    assert bs.e_b == pytest.approx(E_B_AT_MINUS_2, rel=1e-10)
    assert bs.e_b_unsimplified == pytest.approx(bs.e_b, rel=1e-9)
    assert bs.ub_norm == pytest.approx(1.0, abs=1e-10)


def test_bottom_of_spectrum_in_bound_regime(canon, canon_cc):
    desc = spectrum.classify(canon, -2.0, cc=canon_cc)
    assert desc.point_spectrum[0] == pytest.approx(BOTTOM_AT_MINUS_2, rel=1e-9)


def test_bound_energy_kernel_simplification():
    mu, beta = sp.symbols("mu beta", positive=True)
    long_form = (sp.sqrt(beta / mu) - sp.sqrt(mu / beta)) ** 2 / 4 * mu / (mu ** 2 - beta ** 2) ** 2
    short_form = 1 / (4 * beta * (mu + beta) ** 2)
    assert sp.simplify(long_form - short_form) == 0


def test_bound_state_needs_a_gap():
    d = density.example_density(3, 0.0, density.smooth_profile)
    with pytest.raises(RegimeError):
        spectrum.bound_state(d, -1.0)


@pytest.mark.parametrize("lam", [-1.0, -3.0])
def test_bound_state_regime(canon, canon_cc, lam):
    with pytest.raises(RegimeError):
        spectrum.bound_state(canon, lam, cc=canon_cc)


@pytest.mark.parametrize("lam", [1.0, -1.0])
def test_hs_norm_against_discrete_oracle(canon, canon_cc, lam):
    res = spectrum.hs_trace_with_error(canon, lam, False, cc=canon_cc)
    pair = oracle.bogoliubov_pair(oracle.discretize(canon, 400), lam)
    assert res.value == pytest.approx(pair.hs_norm_sq, rel=1e-6)


def test_hs_norm_in_bound_regime_splits_off_the_bound_mode(canon, canon_cc):
    res = spectrum.hs_trace_with_error(canon, -2.0, False, cc=canon_cc)
    pair = oracle.bogoliubov_pair(oracle.discretize(canon, 400), -2.0)
    columns = np.sum(pair.V ** 2, axis=0)
    assert res.value == pytest.approx(float(np.sum(columns[1:])), rel=1e-6)
    # the bound column carries E_b / beta
    assert pair.nu[0] * columns[0] == pytest.approx(E_B_AT_MINUS_2, rel=1e-6)


@pytest.mark.parametrize("lam", [1.0, -1.0])
def test_weighted_trace_gives_energy(canon, canon_cc, lam):
    tr = spectrum.hs_trace_weighted(canon, lam, weighted=True, cc=canon_cc)
    assert lam / 4.0 - tr == pytest.approx(ENERGY_BY_LOG_D[lam], rel=1e-9)


def test_trace_vanishes_at_zero_coupling(canon):
    assert spectrum.hs_trace_with_error(canon, 0.0, True) == (0.0, 0.0)


# ---------------------------------------------------------------- classification


def test_regimes(canon, canon_cc):
    assert spectrum.classify(canon, 1.0, cc=canon_cc).regime == spectrum.SUPERCRITICAL
    assert spectrum.classify(canon, -1.0, cc=canon_cc).regime == spectrum.SUPERCRITICAL
    assert spectrum.classify(canon, -2.0, cc=canon_cc).regime == spectrum.BOUND
    assert spectrum.classify(canon, -3.0, cc=canon_cc).regime == spectrum.UNBOUNDED
    assert spectrum.classify(canon, canon_cc.lambda_c, cc=canon_cc).regime == spectrum.CRITICAL_C
    assert spectrum.classify(canon, canon_cc.lambda_c0, cc=canon_cc).regime == spectrum.CRITICAL_C0


def test_supercritical_description(canon, canon_cc):
    desc = spectrum.classify(canon, 1.0, cc=canon_cc)
    assert desc.point_spectrum == (desc.e_g,)
    assert desc.ac_start == pytest.approx(1.0 + desc.e_g)
    assert desc.sc_empty and desc.bounded_below and not desc.bounded_above
    assert desc.e_b == 0.0 and desc.beta is None


def test_zero_coupling_is_the_free_field(canon, canon_cc):
    desc = spectrum.classify(canon, 0.0, cc=canon_cc)
    assert desc.regime == spectrum.SUPERCRITICAL
    assert desc.e_g == 0.0 and desc.point_spectrum == (0.0,) and desc.ac_start == 1.0


def test_ladder_is_spaced_by_beta(canon, canon_cc):
    desc = spectrum.classify(canon, -2.0, n_report=5, cc=canon_cc)
    assert len(desc.point_spectrum) == 6
    np.testing.assert_allclose(np.diff(desc.point_spectrum), desc.beta, rtol=1e-13)
    assert desc.ac_start == pytest.approx(1.0 + desc.point_spectrum[0])
    assert any("all n" in n for n in desc.notes)
    # beta ~ 0.80 < e0 = 1 < 2 beta: from n = 2 on the eigenvalues sit inside the continuum
    assert any("n >= 2" in n for n in desc.notes)


def test_unbounded_reports_no_sets(canon, canon_cc):
    desc = spectrum.classify(canon, -3.0, cc=canon_cc)
    assert desc.point_spectrum == () and desc.ac_start is None
    assert desc.bounded_below is False and desc.bounded_above is False


def test_lambda_c_is_left_open(canon, canon_cc):
    desc = spectrum.classify(canon, canon_cc.lambda_c, cc=canon_cc)
    assert desc.e_g is None and desc.bounded_below is None


def test_lambda_c0_without_linear_term(canon, canon_cc):
    desc = spectrum.classify(canon, canon_cc.lambda_c0, cc=canon_cc)
    assert desc.bounded_below is True and not desc.whole_line
    assert desc.point_spectrum == ()


def _kappa_free_vector(d):
    centre = density.moment(d, "one") / density.moment(d, "inverse")
    return density.GeneralizedVector(lambda m: np.sqrt(d(m)) * (np.asarray(m) - centre))


def test_lambda_c0_with_coupled_linear_term_fills_the_line(canon, canon_cc):
    gv = density.GeneralizedVector(lambda m: np.sqrt(canon(m)))
    desc = spectrum.classify(canon, canon_cc.lambda_c0, eta=0.5, gv=gv, cc=canon_cc)
    assert desc.whole_line and desc.point_spectrum == ()
    assert desc.bounded_below is False
    assert desc.kappa == pytest.approx(0.403652637676805925658921500631, rel=1e-9)


def test_lambda_c0_with_decoupled_linear_term_shifts(canon, canon_cc):
    gv = _kappa_free_vector(canon)
    eta = 0.5
    desc = spectrum.classify(canon, canon_cc.lambda_c0, eta=eta, gv=gv, cc=canon_cc)
    assert not desc.whole_line and desc.kappa == 0.0
    f_inv = density.vector_moment(canon, gv, "inverse")
    assert desc.shift == pytest.approx(-eta * eta / 2.0 * f_inv, rel=1e-12)
    assert desc.bounded_below is True


def test_nonzero_eta_needs_a_vector(canon, canon_cc):
    with pytest.raises(InputError):
        spectrum.classify(canon, 1.0, eta=0.3, cc=canon_cc)


def test_shift_is_singular_at_lambda_c0(canon, canon_cc):
    gv = density.GeneralizedVector(lambda m: np.sqrt(canon(m)))
    with pytest.raises(RegimeError):
        spectrum.shift_Efg(canon, gv, 0.5, canon_cc.lambda_c0, cc=canon_cc)


def test_shift_moves_every_spectral_point(canon, canon_cc):
    gv = density.GeneralizedVector(lambda m: np.sqrt(canon(m)))
    plain = spectrum.classify(canon, -2.0, cc=canon_cc)
    moved = spectrum.classify(canon, -2.0, eta=0.4, gv=gv, cc=canon_cc)
    np.testing.assert_allclose(
        np.array(moved.point_spectrum) - np.array(plain.point_spectrum), moved.shift, atol=1e-14
    )


def _bump_density(omega, g, width=2e-3):
    """Narrow normalized bumps of mass g_j^2 at omega_j: a continuum stand-in for two modes."""
    omega, g = np.asarray(omega), np.asarray(g)

    def psi(m):
        m = np.asarray(m, dtype=float)
        out = sum(
            gj * gj * np.exp(-0.5 * ((m - wj) / width) ** 2) / (width * math.sqrt(2 * math.pi))
            for wj, gj in zip(omega, g)
        )
        return np.where(m > 0.5, out, 0.0)

    pts = tuple(float(w + k * width) for w in omega for k in (-8, -2, 0, 2, 8))
    return density.SpectralDensity(e0=0.5, psi=psi, breakpoints=pts)


def test_shift_formula_against_truncated_fock_with_linear_term():
    omega, g, f = np.array([1.0, 2.0]), np.array([1.0, 0.7]), np.array([0.4, -0.9])
    lam, eta = 0.8, 0.5
    m = oracle.DiscreteModel(omega, g)
    h, basis = oracle.fock_hamiltonian(m, lam, 18)
    index = {occ: i for i, occ in enumerate(basis)}
    a = sum(f[j] * oracle._lowering(basis, index, j) for j in range(2))
    field = (a + a.T) / math.sqrt(2.0)
    fock_shift = np.linalg.eigvalsh((h + eta * field).toarray())[0] - np.linalg.eigvalsh(h.toarray())[0]

    d = _bump_density(omega, g)
    ratio = {1.0: f[0] / g[0], 2.0: f[1] / g[1]}
    gv = density.GeneralizedVector(
        lambda mu: np.sqrt(d(mu)) * np.where(np.asarray(mu) < 1.5, ratio[1.0], ratio[2.0])
    )
    got = spectrum.shift_Efg(d, gv, eta, lam)
    assert got == pytest.approx(fock_shift, rel=1e-4)


# ---------------------------------------------------------------- unboundedness witness


def _direct_quotient(d, lam, n_max):
    """<phi, H phi>/<phi, phi> for phi = sum_n n^{-3/4} |n> in the mode of f = T^{-1} g / ||T^{-1} g||."""
    inv = density.moment(d, "inverse")
    inv_sq = density.moment(d, "inverse_sq")
    g_sq = density.moment(d, "one")
    kinetic = inv / inv_sq
    overlap = inv * inv / inv_sq
    c = np.array([1.0] + [n ** -0.75 for n in range(1, n_max + 1)])
    n = np.arange(n_max + 1, dtype=float)
    norm = np.sum(c * c)
    number = np.sum(n * c * c)
    pair = np.sum(c[:-2] * c[2:] * np.sqrt((n[:-2] + 1) * (n[:-2] + 2)))
    field_sq = 0.5 * (g_sq * norm + 2 * overlap * number + 2 * overlap * pair)
    return (kinetic * number + lam / 2.0 * field_sq) / norm


@pytest.mark.parametrize("n_max", [2, 3, 10, 500])
@pytest.mark.parametrize("eps", [0.01, 0.5])
@pytest.mark.filterwarnings("ignore::pairspec.spectrum.WitnessParameterWarning")
def test_witness_series_matches_direct_expectation(canon, n_max, eps):
    # delta below e0 = 1 leaves the spectral cut inactive for the canon density
    series = spectrum.unboundedness_witness(canon, -3.0, 0.5, eps, n_max)
    assert series.at(n_max) == pytest.approx(_direct_quotient(canon, -3.0, n_max), rel=1e-12)


def test_witness_decreases_without_bound_below_lambda_c0(canon):
    series = spectrum.unboundedness_witness(canon, -3.0, 1e-3, 1e-3, 100_000)
    tail = series.rayleigh[1000:]
    assert np.all(np.diff(tail) < 0)
    assert series.c_lambda < 0
    # growth ~ sqrt(N): quadrupling N roughly doubles the quotient
    assert series.at(100_000) / series.at(25_000) == pytest.approx(2.0, rel=0.05)


def test_witness_scan_above_lambda_c0_finds_no_negative_coefficient(canon):
    c, delta, eps = spectrum.witness_scan(canon, -2.0)
    assert c > 0
    assert isinstance(c, float)


def test_witness_warns_for_useless_parameters(canon):
    with pytest.warns(spectrum.WitnessParameterWarning):
        spectrum.unboundedness_witness(canon, -2.5, 0.5, 0.9, 10)


@pytest.mark.parametrize(
    "delta, eps, n_max", [(0.0, 0.5, 10), (0.5, 0.0, 10), (0.5, 1.0, 10), (0.5, 0.5, 0)]
)
def test_witness_argument_checks(canon, delta, eps, n_max):
    with pytest.raises(InputError):
        spectrum.unboundedness_witness(canon, -3.0, delta, eps, n_max)


@pytest.mark.filterwarnings("ignore::pairspec.spectrum.WitnessParameterWarning")
def test_witness_sample_is_log_spaced_and_ends_at_the_last_term(canon):
    series = spectrum.unboundedness_witness(canon, -3.0, 0.5, 0.5, 10_000)
    rows = series.sample(50)
    assert rows[-1][0] == 10_000
    assert [r[0] for r in rows] == sorted({r[0] for r in rows})


@settings(max_examples=20, deadline=None)
@given(lam=st.floats(-2.4, 3.0))
def test_c_lambda_is_eps_monotone_and_positive_above_lambda_c0(canon, lam):
    a = spectrum.c_lambda(canon, lam, 0.5, 0.1)
    b = spectrum.c_lambda(canon, lam, 0.5, 0.6)
    assert a > 0 and b > 0
    # lam < 0 makes the (2 - eps) factor hurt less as eps grows
    assert (b - a) * lam <= 1e-15
