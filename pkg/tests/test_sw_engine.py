import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcrit import sw_engine as sw
from qcrit.errors import DomainError, InvalidDimensionError

CLASSES = list(sw.CLASSES)


# ---------------------------------------------------------------- algebras

def test_spin_half_algebra():
    z, p, m = sw.algebra_ops("SU2", 2)
    assert np.allclose(z, np.diag([0.5, -0.5]))
    assert sw.commutator_defect("SU2", 2) == 0.0
    assert np.allclose(p @ m - m @ p, 2 * z)


def test_su11_algebra_away_from_edge():
    assert sw.commutator_defect("SU11", 60, rows=56) <= 1e-10


def test_boson_algebra_away_from_edge():
    assert sw.commutator_defect("Boson", 40, rows=39) <= 1e-12
    assert sw.commutator_defect("Boson", 40) > 1.0


@pytest.mark.parametrize("kind", sw.ALGEBRAS)
def test_raising_shifts_weight(kind):
    z, p, _ = sw.algebra_ops(kind, 12)
    comm = z @ p - p @ z
    assert np.allclose(comm[:10, :10], p[:10, :10])


def test_class_lookup_errors():
    with pytest.raises(DomainError):
        sw.AlgebraClass.named("jaynes")
    with pytest.raises(InvalidDimensionError):
        sw.AlgebraClass("SU2", "Boson", 1, 4)
    with pytest.raises(DomainError):
        sw.sw_transform("rabi-like", 0.5, 1.0)


# ---------------------------------------------------------------- transformation

@pytest.mark.parametrize("cls", CLASSES)
def test_zero_epsilon_is_identity(cls):
    r = sw.sw_transform(cls, 0.0, 0.7)
    ops = r.ops
    H = sw.class_hamiltonian(ops, 0.0, 0.7)
    assert np.allclose(r.transformed_H, H)
    assert r.residual_offdiag_norm[4] == 0.0


@pytest.mark.parametrize("cls", CLASSES)
def test_first_order_generator_cancels_coupling(cls):
    assert sw.first_order_offdiag(cls, 0.8) < 1e-12


@pytest.mark.parametrize("cls", CLASSES)
def test_no_second_order_offdiagonal(cls):
    off, total = sw.second_order_offdiag(cls, 0.8)
    assert off <= 1e-10 * max(total, 1.0)


@pytest.mark.parametrize("cls", CLASSES)
def test_generators_anti_hermitian(cls):
    ops = sw.build_class_operators(sw.AlgebraClass.named(cls))
    for S in sw.generators(ops, 0.6).values():
        assert np.allclose(S, -S.conj().T)


@pytest.mark.parametrize("cls", CLASSES)
def test_fifth_order_residual_scaling(cls):
    _, slopes = sw.residual_exponent(cls, 0.5)
    assert abs(slopes[-1] - 5.0) <= 0.3


@pytest.mark.parametrize("cls", ["rabi-like", "two-photon-dicke", "two-photon-rabi"])
def test_quoted_generators_fall_short(cls):
    # the reference sign table leaves an eps^4 off-diagonal remainder
    _, slopes = sw.residual_exponent(cls, 0.5, generator_set="quoted")
    assert slopes[-1] < 4.5


# S2 = 0, so order 1 already leaves an eps^3 remainder; for spin 1/2 the
# S4 generator vanishes and order 3 reaches eps^5
@pytest.mark.parametrize("order,expected", [(1, 3.0), (3, 5.0)])
def test_lower_orders(order, expected):
    _, slopes = sw.residual_exponent("rabi-like", 0.5, order=order)
    assert abs(slopes[-1] - expected) <= 0.3


@pytest.mark.parametrize("cls", CLASSES)
@pytest.mark.parametrize("eps", [0.2, 0.1, 0.05])
def test_block_diagonal_matches_corrected_closed_form(cls, eps):
    r = sw.sw_transform(cls, eps, 0.5)
    assert r.blockdiag_deviation["corrected"] <= eps**5 * r.h_norm


def test_rabi_like_block_diagonal_terms():
    # projection on the lowest P_z block holds -Q_z-free combination of
    # Q_x^2 and Q_x^4 terms with the expected coefficients
    eps, lam = 0.05, 0.5
    block, ops, r = sw.lowest_block_projection("rabi-like", eps, lam)
    Qx = ops.xy("Q")[0]
    Qz = ops.Q[0]
    pz = -0.5
    keepQ = ops.keep[ops.dim_Q:]
    expected = (pz * np.eye(ops.dim_Q) + eps**2 * (Qz + 0.5 * lam**2 * pz * Qx @ Qx)
                + eps**4 * (lam**2 / 16 * np.eye(ops.dim_Q) - lam**4 / 8 * pz * np.linalg.matrix_power(Qx, 4)))
    expected = expected[np.ix_(keepQ, keepQ)]
    assert np.linalg.norm(block - expected) <= eps**5 * r.h_norm


@settings(max_examples=10, deadline=None)
@given(st.floats(0.3, 1.2))
def test_residual_small_for_any_lambda(lam):
    r = sw.sw_transform("rabi-like", 0.05, lam)
    assert r.residual_offdiag_norm[4] < 1e-3 * r.h_norm
    assert r.unitarity_error < 1e-9


# ---------------------------------------------------------------- boson-boson instability

@pytest.mark.parametrize("lam,unstable", [(0.0, False), (1.9, False), (2.0, True), (2.5, True)])
def test_instability_flag(lam, unstable):
    flag, coef = sw.boson_boson_instability_check(0.1, lam)
    assert flag is unstable
    if lam > 2:
        assert coef < 0


def test_instability_confirmed_by_cutoff_growth():
    eps = 0.3
    below = [sw.boson_boson_ground_energy(eps, 1.5, c) for c in (15, 30, 45)]
    above = [sw.boson_boson_ground_energy(eps, 2.5, c) for c in (15, 30, 45)]
    assert abs(below[2] - below[1]) < 1e-10
    # unbounded below: every added level lowers the ground energy further
    assert above[2] < above[1] - 0.5 < above[0] - 1.0
