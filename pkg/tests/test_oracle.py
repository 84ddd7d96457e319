import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from pairspec import density, oracle
from pairspec.errors import DimensionError, DomainError, InputError, RegimeError

TWO_MODE = oracle.DiscreteModel([1.0, 2.0], [1.0, 1.0])


def test_two_mode_closed_form():
    # Omega^2 + lam z z^T with z = (1, sqrt 2), lam = 1, has eigenvalues 4 -+ sqrt 6
    nu = oracle.normal_modes(TWO_MODE, 1.0)
    np.testing.assert_allclose(nu, [math.sqrt(4 - math.sqrt(6)), math.sqrt(4 + math.sqrt(6))], rtol=1e-14)
    expected = 0.5 * (math.sqrt(4 - math.sqrt(6)) + math.sqrt(4 + math.sqrt(6)) - 3.0)
    assert oracle.discrete_ground_energy(TWO_MODE, 1.0) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.3925, abs=1e-3)


def test_decoupled_mode_keeps_its_frequency():
    m = oracle.DiscreteModel([1.0, 2.0], [1.0, 0.0])
    np.testing.assert_allclose(oracle.normal_modes(m, 3.0), [2.0, 2.0], rtol=1e-14)


def test_zero_coupling():
    np.testing.assert_array_equal(oracle.normal_modes(TWO_MODE, 0.0), [1.0, 2.0])
    assert oracle.discrete_ground_energy(TWO_MODE, 0.0) == 0.0


def test_discrete_lambda_c0_is_where_the_form_loses_positivity():
    lc0 = TWO_MODE.lambda_c0
    assert lc0 == pytest.approx(-2.0 / 3.0)
    evals = np.linalg.eigvalsh(oracle.dynamical_matrix(TWO_MODE, lc0))
    assert abs(evals[0]) < 1e-14
    with pytest.raises(RegimeError) as info:
        oracle.normal_modes(TWO_MODE, lc0 * 1.01)
    assert info.value.smallest_eigenvalue < 0


@pytest.mark.parametrize(
    "omega, g",
    [([], []), ([1.0], [1.0, 2.0]), ([0.0, 1.0], [1.0, 1.0]), ([2.0, 1.0], [1.0, 1.0]), ([1.0, np.nan], [1, 1])],
)
def test_model_validation(omega, g):
    with pytest.raises(InputError):
        oracle.DiscreteModel(omega, g)


def _models():
    return st.integers(1, 50).flatmap(
        lambda n: st.tuples(
            st.lists(st.floats(0.05, 5.0), min_size=n, max_size=n, unique=True),
            st.lists(st.floats(-1.0, 1.0), min_size=n, max_size=n),
            st.floats(0.0, 1.0),
        )
    )


def _build(spec):
    gaps, g, t = spec
    omega = np.cumsum(np.sort(gaps))
    m = oracle.DiscreteModel(omega, g)
    return m, t


@settings(max_examples=60, deadline=None)
@given(spec=_models(), sign=st.sampled_from([-1.0, 1.0]))
def test_secular_and_dense_routes_agree_and_interlace(spec, sign):
    m, t = _build(spec)
    assume(m.g_norm_sq > 1e-6)
    lam = 3.0 * t if sign > 0 else 0.95 * t * m.lambda_c0
    dense, secular = oracle.normal_mode_squares(m, lam)
    scale = m.omega[-1] ** 2 + abs(lam) * np.sum(m.omega * m.g ** 2)
    np.testing.assert_allclose(dense, secular, rtol=1e-12, atol=64 * np.finfo(float).eps * scale)
    w2 = m.omega ** 2
    tol = 1e-12 * scale
    if lam > 0:
        assert np.all(dense >= w2 - tol)
        assert np.all(dense[:-1] <= w2[1:] + tol)
    else:
        assert np.all(dense <= w2 + tol)
        assert np.all(dense[1:] >= w2[:-1] - tol)


@settings(max_examples=60, deadline=None)
@given(spec=_models(), sign=st.sampled_from([-1.0, 1.0]))
def test_bogoliubov_identities_and_trace(spec, sign):
    m, t = _build(spec)
    assume(m.g_norm_sq > 1e-6)
    lam = 2.0 * t + 0.01 if sign > 0 else (0.9 * t + 0.05) * m.lambda_c0
    pair = oracle.bogoliubov_pair(m, lam)
    assert pair.max_residual <= 1e-10
    # E = lam ||g||^2 / 4 - Tr(N V^T V)
    e = oracle.discrete_ground_energy(m, lam)
    assert e == pytest.approx(lam * m.g_norm_sq / 4.0 - pair.weighted_trace, abs=1e-11 * (1 + abs(e)))


def test_bogoliubov_pair_needs_positive_frequencies():
    with pytest.raises(DomainError):
        oracle.bogoliubov_pair(TWO_MODE, TWO_MODE.lambda_c0)


@pytest.mark.parametrize("rule", oracle.RULES)
def test_discretization_keeps_mass_and_lambda_c0(canon, rule):
    m = oracle.discretize(canon, 300, rule)
    assert m.n == 300
    assert m.g_norm_sq == pytest.approx(1.0, abs=1e-6)
    assert m.lambda_c0 == pytest.approx(-2.47737759315888270749840624941, rel=1e-6)
    assert m.omega[0] > 1.0


def test_discretization_argument_checks(canon):
    with pytest.raises(InputError):
        oracle.discretize(canon, 0)
    with pytest.raises(InputError):
        oracle.discretize(canon, 10, "simpson")


def test_fock_dimension_and_basis_order():
    assert oracle.fock_dimension(2, 12) == 91
    basis = oracle.fock_basis(3, 2)
    assert len(basis) == oracle.fock_dimension(3, 2)
    totals = [sum(b) for b in basis]
    assert totals == sorted(totals)
    assert basis[:4] == [(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0)]


def test_fock_hamiltonian_is_symmetric():
    h, _ = oracle.fock_hamiltonian(TWO_MODE, 0.7, 6)
    assert abs(h - h.T).max() < 1e-14


def test_fock_free_spectrum():
    res = oracle.fock_diagonalize(TWO_MODE, 0.0, 3, k=6)
    np.testing.assert_allclose(res.eigenvalues, [0, 1, 2, 2, 3, 3], atol=1e-14)


def test_fock_ground_state_converges_to_normal_mode_energy():
    exact = oracle.discrete_ground_energy(TWO_MODE, 1.0)
    errs = [abs(oracle.fock_diagonalize(TWO_MODE, 1.0, nc).eigenvalues[0] - exact) for nc in (4, 8, 12)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-7


def test_fock_sparse_path_matches_normal_modes():
    m = oracle.DiscreteModel([1.0, 1.3, 1.7, 2.2], [0.5, 0.4, 0.3, 0.2])
    res = oracle.fock_diagonalize(m, 0.5, 14, k=3)
    assert res.dim == oracle.fock_dimension(4, 14) > 3000
    assert res.eigenvalues[0] == pytest.approx(oracle.discrete_ground_energy(m, 0.5), abs=1e-8)
    nu = oracle.normal_modes(m, 0.5)
    assert res.eigenvalues[1] - res.eigenvalues[0] == pytest.approx(nu[0], abs=1e-6)


def test_fock_cap_and_cutoff_flag():
    with pytest.raises(DimensionError):
        oracle.fock_diagonalize(TWO_MODE, 1.0, 200, dim_cap=1000)
    with pytest.raises(InputError):
        oracle.fock_diagonalize(TWO_MODE, 1.0, -1)
    below = oracle.fock_diagonalize(TWO_MODE, -1.0, 8)
    assert below.cutoff_dependent
    deeper = oracle.fock_diagonalize(TWO_MODE, -1.0, 10)
    assert deeper.eigenvalues[0] < below.eigenvalues[0] - 0.5


def test_bogoliubov_from_density_discretization(canon):
    pair = oracle.bogoliubov_pair(oracle.discretize(canon, 200), 1.0)
    assert pair.max_residual < 1e-10
    assert pair.hs_norm_sq == pytest.approx(0.0066710931803, rel=1e-9)
