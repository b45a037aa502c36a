import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm
from scipy.optimize import brentq

from qcrit import gaussian_metrology as gm
from qcrit.errors import DomainError, SchemaError

from oracles import fock_density, fock_state_lowrank, moments, mz_generator, sld_qfi, sld_qfi_lowrank

angles = st.floats(0.0, 2 * np.pi)


def params_strategy(nu_max=3.0, xi_max=1.0, gamma_max=2.0):
    return st.builds(
        gm.WilliamsonParams,
        nu=st.floats(1.0, nu_max), phi1=angles, phi2=angles, theta=st.floats(0, np.pi),
        Psi=st.floats(0, np.pi), xi1=st.floats(0, xi_max), xi2=st.floats(0, xi_max),
        gamma_abs=st.floats(0, gamma_max), l=st.floats(0, np.pi / 2), phi_d1=angles, phi_d2=angles,
    )


# ---------------------------------------------------------------- symplectic building blocks

def test_zero_phase_is_identity():
    assert np.allclose(gm.R1(0.0), np.eye(4))


def test_beam_splitter_quarter_turn_swaps_modes():
    M = gm.B(np.pi / 2)
    assert np.allclose(np.abs(M[:2, :2]), [[0, 1], [1, 0]])
    assert np.allclose(np.abs(M[2:, 2:]), [[0, 1], [1, 0]])


@pytest.mark.parametrize("xi", [0.1, 0.7, 1.5])
def test_squeeze_inverse(xi):
    assert np.max(np.abs(gm.S1(xi) @ gm.S1(-xi) - np.eye(4))) <= 1e-12
    assert np.max(np.abs(gm.S2(xi) @ gm.S2(-xi) - np.eye(4))) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(angles, angles, st.floats(0, np.pi), st.floats(-1, 1), st.floats(-1, 1), angles)
def test_operations_are_symplectic(p1, p2, th, x1, x2, psi):
    for M in gm.symplectic_ops(p1, p2, th, x1, x2, psi):
        assert gm.is_symplectic(M, 1e-10)


@settings(max_examples=20, deadline=None)
@given(angles, st.floats(0, np.pi), angles)
def test_ple_is_passive_unitary(a, b, c):
    M = gm.ple_euler(a, b, c)
    u = M[:2, :2]
    assert np.allclose(u @ u.conj().T, np.eye(2))
    assert np.allclose(M[:2, 2:], 0)


# ---------------------------------------------------------------- states

def test_vacuum_from_zero_params():
    s = gm.williamson_build(gm.WilliamsonParams())
    assert np.allclose(s.sigma, np.eye(4))
    assert np.allclose(s.d, 0)


def test_thermal_spectrum():
    s = gm.williamson_build(gm.WilliamsonParams(nu=3.0))
    ev = np.sort(np.linalg.eigvals(gm.symplectic_form() @ s.sigma).real)
    assert np.allclose(ev, [-3, -3, 3, 3])


@settings(max_examples=40, deadline=None)
@given(params_strategy())
def test_mean_photon_number_identity(p):
    s = gm.williamson_build(p)
    expected = p.nu - 1 + p.nu * (np.sinh(p.xi1) ** 2 + np.sinh(p.xi2) ** 2) + p.gamma_abs**2
    assert gm.mean_photon_number(s) == pytest.approx(expected, rel=1e-10, abs=1e-12)
    assert np.trace(s.sigma).real == pytest.approx(2 * p.nu * (np.cosh(2 * p.xi1) + np.cosh(2 * p.xi2)))


@pytest.mark.parametrize("p,expected", [
    (gm.WilliamsonParams(), 0.0),
    (gm.WilliamsonParams(gamma_abs=1.3), 1.69),
    (gm.WilliamsonParams(nu=2.0, xi1=1.0), 1 + 2 * np.sinh(1.0) ** 2),
])
def test_mean_photon_number_examples(p, expected):
    assert gm.mean_photon_number(gm.williamson_build(p)) == pytest.approx(expected)


@settings(max_examples=40, deadline=None)
@given(params_strategy())
def test_williamson_round_trip(p):
    s = gm.williamson_build(p)
    back = gm.williamson_build(gm.williamson_decompose(s))
    assert np.allclose(back.sigma, s.sigma, atol=1e-8)
    assert np.allclose(back.d, s.d, atol=1e-8)


def test_state_validation():
    with pytest.raises(DomainError):
        gm.GaussianState(2, 0.5 * np.eye(4), np.zeros(4))
    with pytest.raises(DomainError):
        gm.GaussianState(2, np.eye(4), np.array([1, 0, 1j, 0]))
    with pytest.raises(DomainError):
        gm.WilliamsonParams(nu=0.5)


def test_state_json_round_trip():
    s = gm.williamson_build(gm.WilliamsonParams(nu=1.4, xi1=0.3, phi1=0.2, gamma_abs=0.5, l=0.4))
    back = gm.state_from_json(gm.state_to_json(s))
    assert np.allclose(back.sigma, s.sigma) and np.allclose(back.d, s.d)


@pytest.mark.parametrize("obj,path", [
    ({"q": 2}, "state"),
    ({"williamson": {"nu": 1.0, "bogus": 1}}, "state.williamson.bogus"),
    ({"q": 2, "sigma": [[[1, 0]]], "d": []}, "state.sigma"),
])
def test_state_json_errors(obj, path):
    with pytest.raises(SchemaError) as exc:
        gm.state_from_json(obj)
    assert exc.value.path == path


# ---------------------------------------------------------------- QFI

@pytest.mark.parametrize("nu,gamma", [(1.0, 0.7), (2.5, 1.2)])
def test_coherent_phase_qfi(nu, gamma):
    sigma = nu * np.eye(2, dtype=complex)
    d = np.array([gamma, gamma], dtype=complex)
    Gen = gm.phase_generator(1)
    assert gm.qfi_isotropic(sigma, d, np.zeros((2, 2)), Gen @ d) == pytest.approx(4 * gamma**2 / nu)


def test_qfi_zero_for_static_centred_state():
    assert gm.qfi_isotropic(np.eye(4), np.zeros(4), np.zeros((4, 4)), np.zeros(4)) == 0.0


@pytest.mark.parametrize("seed", range(2))
def test_qfi_matches_fock_oracle(seed):
    rng = np.random.default_rng(seed)
    p = gm.random_params(rng, nu_max=1.1, xi_max=0.2, gamma_max=0.6)
    rho, ops = fock_density(p, 20)
    s = gm.williamson_build(p)
    sigma, d = moments(rho, ops)
    assert np.allclose(sigma, s.sigma, atol=1e-8)
    assert sld_qfi(rho, mz_generator(*ops)) == pytest.approx(gm.qfi_channel(s), rel=0.01)


def test_lowrank_oracle_matches_dense_oracle():
    p = gm.random_params(np.random.default_rng(7), nu_max=1.3, xi_max=0.2, gamma_max=0.5)
    w, V, ops = fock_state_lowrank(p, 20)
    rho, _ = fock_density(p, 20)
    H = mz_generator(*ops)
    assert sld_qfi_lowrank(w, V, H) == pytest.approx(sld_qfi(rho, H), rel=1e-9)


def test_one_mode_unsqueezed():
    assert gm.qfi_one_mode(1.7, 0.0, 0.9, 0.3, 1.1) == pytest.approx(4 * 0.81 / 1.7)


@settings(max_examples=30, deadline=None)
@given(st.floats(1, 3), st.floats(0, 1), st.floats(0, 2), angles, angles)
def test_one_mode_formula_matches_phase_space(nu, xi, g, phi, phi_d):
    s = gm.one_mode_state(nu, xi, g, phi, phi_d)
    Gen = gm.phase_generator(1)
    sd = Gen @ s.sigma + s.sigma @ Gen.conj().T
    ref = gm.qfi_isotropic(s.sigma, s.d, sd, Gen @ s.d)
    assert gm.qfi_one_mode(nu, xi, g, phi, phi_d) == pytest.approx(ref, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("xi", [0.1, 0.5, 1.0])
def test_squeezing_beats_displacement(xi):
    # pure squeezed vacuum: QFI = 4 Var(n) = 2 sinh^2(2 xi)
    assert gm.qfi_one_mode(1.0, xi, 0.0, 0.0, 0.0) == pytest.approx(2 * np.sinh(2 * xi) ** 2)
    assert gm.advantage_one_mode(1.0, xi, 0.0, 0.0, 0.0) > 0


def test_advantage_lost_for_large_misaligned_displacement():
    f = lambda g: gm.advantage_one_mode(1.0, 0.3, g, np.pi / 2, 0.0)  # noqa: E731
    assert f(0.0) > 0
    root = brentq(f, 0.0, 10.0)
    assert 0 < root < 10
    assert f(root * 1.1) < 0


def test_general_one_mode_qfi_thermal():
    # a thermal state with varying temperature: QFI = nu_dot^2 / (nu^2 - 1)
    nu, nu_dot = 2.0, 0.3
    assert gm.qfi_one_mode_general(nu * np.eye(2), nu_dot * np.eye(2)) == pytest.approx(nu_dot**2 / (nu**2 - 1))


def test_general_one_mode_qfi_pure_squeezing():
    r, r_dot = 0.4, 0.7
    sig = lambda x: 0.5 * np.diag([np.exp(-2 * x), np.exp(2 * x)])  # noqa: E731
    sd = 0.5 * np.diag([-2 * np.exp(-2 * r), 2 * np.exp(2 * r)]) * r_dot
    got = gm.qfi_one_mode_general(gm.xp_to_complex(sig(r)), gm.xp_to_complex(sd))
    assert got == pytest.approx(2 * r_dot**2)


def test_two_mode_explicit_trivial():
    p = gm.WilliamsonParams(nu=2.0)
    assert gm.qfi_two_mode_explicit(p) == 0.0


@pytest.mark.parametrize("nu,x1,x2", [(1.0, 0.3, 0.2), (2.0, 0.5, 0.1)])
def test_two_mode_explicit_orthogonal_phases(nu, x1, x2):
    p = gm.WilliamsonParams(nu=nu, phi1=np.pi / 2, xi1=x1, xi2=x2)
    assert gm.qfi_two_mode_explicit(p) == pytest.approx(8 * nu**2 * np.sinh(x1 + x2) ** 2 / (nu**2 + 1))


@settings(max_examples=40, deadline=None)
@given(params_strategy())
def test_two_mode_explicit_matches_channel_evolution(p):
    p = p.replace(theta=0.0, Psi=0.0)
    s = gm.williamson_build(p)
    # independent path: finite-difference derivative of the evolved moments
    Gen = gm._generator(gm.MZ_DIRECTION)
    h = 1e-6
    U = lambda t: expm(t * Gen)  # noqa: E731
    sd = (U(h) @ s.sigma @ U(h).conj().T - U(-h) @ s.sigma @ U(-h).conj().T) / (2 * h)
    dd = (U(h) @ s.d - U(-h) @ s.d) / (2 * h)
    ref = gm.qfi_isotropic(s.sigma, s.d, sd, dd)
    assert gm.qfi_two_mode_explicit(p) == pytest.approx(ref, rel=1e-6, abs=1e-8)


def test_explicit_requires_reduced_state():
    with pytest.raises(DomainError):
        gm.qfi_two_mode_explicit(gm.WilliamsonParams(theta=0.3))


@settings(max_examples=30, deadline=None)
@given(params_strategy())
def test_qfi_matrix_quadratic_form(p):
    s = gm.williamson_build(p)
    F = gm.qfi_matrix(s)
    for n in (np.array([0.0, 1.0, 0.0]), np.array([0.6, 0.0, 0.8]), np.array([1.0, 1.0, 1.0]) / np.sqrt(3)):
        assert n @ F @ n == pytest.approx(gm.qfi_channel(s, n), rel=1e-9, abs=1e-9)


# ---------------------------------------------------------------- FTQL and the advantage

@pytest.mark.parametrize("n,nu,expected", [(3.0, 1.0, 12.0), (0.0, 1.0, 0.0), (10.0, 2.0, 18.0)])
def test_ftql_values(n, nu, expected):
    assert gm.ftql(n, nu) == pytest.approx(expected)


@settings(max_examples=30, deadline=None)
@given(params_strategy())
def test_displaced_thermal_has_no_advantage(p):
    s = gm.williamson_build(p.replace(xi1=0.0, xi2=0.0))
    assert gm.metrological_advantage(s).advantage <= 1e-10


def test_squeezed_thermal_has_advantage():
    s = gm.williamson_build(gm.WilliamsonParams(nu=2.0, xi1=0.5))
    assert gm.metrological_advantage(s).advantage > 0


@settings(max_examples=30, deadline=None)
@given(params_strategy(), st.floats(0.05, 1.0))
def test_mixed_squeezed_states_always_win(p, xi):
    p = p.replace(nu=max(p.nu, 1.05), xi1=xi)
    r = gm.metrological_advantage(gm.williamson_build(p))
    assert r.advantage > 0
    assert r.qfi_opt >= r.constructive_qfi - 1e-9


def lemma_state(nu=1.0, xi=0.4, gamma_abs=2.0):
    """Squeezed mode next to vacuum, displacement along the squeezed axis.

    Here V < 0 and the displacement is large enough that sending the state
    straight into the interferometer is optimal, which for a pure state
    gives exactly the FTQL.
    """
    return gm.williamson_build(gm.WilliamsonParams(nu=nu, xi1=xi, gamma_abs=gamma_abs))


def test_pure_edge_case_attains_ftql():
    r = gm.metrological_advantage(lemma_state())
    assert r.details["V_I"] == 0.0
    assert r.advantage == 0.0
    assert r.qfi_opt == pytest.approx(r.qfi_ref, rel=1e-12)
    name, q = gm.optimal_one_mode_strategy(1.0, 0.4, 2.0, 0.0, 0.0)
    assert name == "MachZehnder" and q == pytest.approx(r.qfi_opt, rel=1e-12)


def test_mixed_edge_case_beats_ftql():
    assert gm.metrological_advantage(lemma_state(nu=1.05)).advantage > 0


@pytest.mark.parametrize("xi,g,phi1,phi_d", [(0.5, 0.2, 0.0, 1.2), (0.3, 5.0, 0.0, 0.0)])
def test_one_mode_strategy_branches(xi, g, phi1, phi_d):
    name, q = gm.optimal_one_mode_strategy(1.5, xi, g, phi1, phi_d)
    V = np.exp(2 * xi) * np.sin(phi_d - phi1) ** 2 + np.exp(-2 * xi) * np.cos(phi_d - phi1) ** 2 - 1
    pref = 4 * 1.5**2 / (1.5**2 + 1)
    if V >= 0:
        assert name == "OneMode"
        assert q == pytest.approx(pref * np.sinh(2 * xi) ** 2 + 4 * g**2 * (V + 1) / 1.5)
    else:
        assert name == "MachZehnder"
        assert q == pytest.approx(2 * pref * np.sinh(xi) ** 2 + 4 * g**2 / 1.5)


def test_one_mode_strategies_tie_without_squeezing():
    name, q = gm.optimal_one_mode_strategy(1.5, 0.0, 0.7, 0.2, 1.0)
    assert q == pytest.approx(4 * 0.49 / 1.5)


def test_convex_roof_validation():
    s = gm.GaussianState.vacuum()
    assert gm.convex_roof_advantage([0.5, 0.5], [s, s]) == 0.0
    with pytest.raises(DomainError):
        gm.convex_roof_advantage([0.7, 0.7], [s, s])


# ---------------------------------------------------------------- separability

def test_separability_without_displacement():
    r = gm.separability_check_n2(0.0, 0.4)
    assert r["Upsilon"] == 0.0 and r["Xi"] == 0.0
    assert np.all(r["pt_eigenvalues"] >= 0)


def test_separability_displaced_example():
    r = gm.separability_check_n2(1 + 0.5j, 0.5)
    assert r["separable"]
    assert np.all(r["pt_eigenvalues"] >= -1e-10)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 3), angles, st.floats(0, 0.95))
def test_characteristic_sums(mod, arg, theta):
    r = gm.separability_check_n2(mod * np.exp(1j * arg), theta)
    for k in ("e1", "e2", "e3"):
        scale = max(1.0, abs(r["char_closed"][k]))
        assert abs(r["char_sums"][k] - r["char_closed"][k]) <= 1e-9 * scale


def test_separability_domain():
    with pytest.raises(DomainError):
        gm.separability_check_n2(0.5, 1.0)
