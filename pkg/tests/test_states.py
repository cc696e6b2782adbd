import numpy as np
import pytest

from oracles import brute_force_ground_state, kron_matrix
from qpace.errors import ConfigError, NumericsError
from qpace.models import build_cluster
from qpace.paulis import OperatorSum, PauliTerm
from qpace.states import (StateVector, dense_matrix, expectation, ground_state,
                          ground_state_with_gap, marginal_probs, pauli_apply)


def test_pauli_apply_z_eigenstate():
    psi = StateVector.computational(1, "0")
    out = pauli_apply(PauliTerm("Z"), psi)
    assert np.allclose(out.amplitudes, psi.amplitudes)


def test_pauli_apply_bitflip():
    psi = StateVector.computational(2, "00")
    out = pauli_apply(PauliTerm("XX"), psi)
    assert np.allclose(out.amplitudes, StateVector.computational(2, "11").amplitudes)


def test_pauli_apply_y():
    psi = StateVector.computational(1, "0")
    out = pauli_apply(PauliTerm("Y"), psi)
    expected = np.array([0.0, 1j])
    assert np.allclose(out.amplitudes, expected)


def test_pauli_apply_matches_dense():
    rng = np.random.default_rng(2)
    for _ in range(40):
        n = int(rng.integers(1, 6))
        letters = "".join(rng.choice(list("IXYZ"), size=n))
        term = PauliTerm(letters, complex(rng.normal(), rng.normal()))
        psi = StateVector.random(n, rng)
        out = pauli_apply(term, psi)
        dense = kron_matrix(OperatorSum([term])) @ psi.amplitudes
        assert np.allclose(out.amplitudes, dense, atol=1e-12)


def test_pauli_apply_dimension_mismatch():
    with pytest.raises(ConfigError):
        pauli_apply(PauliTerm("XX"), StateVector.computational(1, 0))


def test_expectation_trivial_cases():
    z = OperatorSum([PauliTerm("Z")])
    assert expectation(z, StateVector.computational(1, "0")) == pytest.approx(1.0)
    plus = StateVector(np.array([1, 1]) / np.sqrt(2), 1)
    assert expectation(OperatorSum([PauliTerm("X")]), plus) == pytest.approx(1.0)
    h = build_cluster(8, 0.0, 0.0)
    ones = StateVector.computational(8, 2 ** 8 - 1)
    assert expectation(h, ones) == pytest.approx(-8.0)


def test_expectation_requires_hermitian():
    op = OperatorSum([PauliTerm("X", 1j)])
    with pytest.raises(ConfigError):
        expectation(op, StateVector.computational(1, 0))


def test_dense_matrix_single_z():
    assert np.allclose(dense_matrix(OperatorSum([PauliTerm("Z")])), np.diag([1, -1]))


def test_dense_matrix_qubit_order_convention():
    # X on qubit 1 of a 2-qubit register is X (x) I: qubit 1 is the MSB
    op = OperatorSum([PauliTerm("XI")])
    x = np.array([[0, 1], [1, 0]])
    assert np.allclose(dense_matrix(op), np.kron(x, np.eye(2)))


def test_dense_matrix_hermitian_for_real_coeffs():
    rng = np.random.default_rng(4)
    terms = [PauliTerm("".join(rng.choice(list("IXYZ"), size=3)), rng.normal())
             for _ in range(6)]
    m = dense_matrix(OperatorSum(terms, n=3))
    assert np.allclose(m, m.conj().T, atol=1e-12)


def test_dense_matrix_cap():
    op = OperatorSum([PauliTerm("Z" * 13)])
    with pytest.raises(ConfigError):
        dense_matrix(op)


def test_ground_state_single_qubit():
    e, psi = ground_state(OperatorSum([PauliTerm("Z")]))
    assert e == pytest.approx(-1.0)
    assert np.allclose(psi.amplitudes, [0.0, 1.0])


def test_ground_state_decoupled_cluster():
    e, psi = ground_state(build_cluster(8, 0.0, 0.0))
    assert e == pytest.approx(-8.0)
    assert np.allclose(psi.amplitudes, StateVector.computational(8, 2 ** 8 - 1).amplitudes)


def test_ground_state_xxz_heisenberg_pairs():
    from qpace.models import build_xxz

    h = build_xxz(4, 1.0, 0.0, 1.0)
    e, psi = ground_state(h)
    e_oracle, _ = brute_force_ground_state(h)
    assert e == pytest.approx(e_oracle, abs=1e-9)
    assert e == pytest.approx(-6.0, abs=1e-9)


def test_ground_state_phase_convention_and_residual():
    rng = np.random.default_rng(8)
    for _ in range(10):
        terms = [PauliTerm("".join(rng.choice(list("IXYZ"), size=4)), rng.normal())
                 for _ in range(5)]
        h = OperatorSum(terms, n=4)
        if len(h) == 0:
            continue
        e, psi = ground_state(h)
        first = psi.amplitudes[np.abs(psi.amplitudes) > 1e-8][0]
        assert abs(first.imag) < 1e-10 and first.real > 0
        residual = np.linalg.norm(kron_matrix(h) @ psi.amplitudes - e * psi.amplitudes)
        assert residual < 1e-8


def test_ground_state_gap_flags_degeneracy():
    # sum of Z on two qubits: gap between E0=-2 and E1=0 is 2
    h = OperatorSum([PauliTerm("ZI"), PauliTerm("IZ")])
    _, _, gap = ground_state_with_gap(h)
    assert gap == pytest.approx(2.0)


def test_marginal_probs_examples():
    psi = StateVector.computational(2, "00")
    assert np.allclose(marginal_probs(psi, (1, 2)), [1, 0, 0, 0])
    bell = StateVector(np.array([1, 0, 0, 1]) / np.sqrt(2), 2)
    assert np.allclose(marginal_probs(bell, (1,)), [0.5, 0.5])
    ghz = np.zeros(16)
    ghz[0] = ghz[-1] = 1 / np.sqrt(2)
    assert np.allclose(marginal_probs(StateVector(ghz, 4), (1, 2)), [0.5, 0, 0, 0.5])


def test_marginal_probs_subset_order():
    # |01>: qubit 1 is 0, qubit 2 is 1; listing (2, 1) flips the outcome bits
    psi = StateVector.computational(2, "01")
    assert np.allclose(marginal_probs(psi, (1, 2)), [0, 1, 0, 0])
    assert np.allclose(marginal_probs(psi, (2, 1)), [0, 0, 1, 0])


def test_marginal_probs_full_set_reproduces_amplitudes():
    rng = np.random.default_rng(11)
    psi = StateVector.random(5, rng)
    assert np.allclose(marginal_probs(psi, range(1, 6)), np.abs(psi.amplitudes) ** 2)


def test_marginal_probs_invalid_subset():
    psi = StateVector.computational(2, 0)
    with pytest.raises(ConfigError):
        marginal_probs(psi, (1, 1))
    with pytest.raises(ConfigError):
        marginal_probs(psi, (0,))


def test_expectation_termwise_matches_dense():
    rng = np.random.default_rng(13)
    for _ in range(20):
        n = int(rng.integers(1, 7))
        terms = [PauliTerm("".join(rng.choice(list("IXYZ"), size=n)), rng.normal())
                 for _ in range(4)]
        h = OperatorSum(terms, n=n)
        if not len(h):
            continue
        psi = StateVector.random(n, rng)
        dense_val = np.real(psi.amplitudes.conj() @ dense_matrix(h) @ psi.amplitudes)
        assert expectation(h, psi) == pytest.approx(dense_val, abs=1e-9)


def test_state_norm_validation():
    with pytest.raises(NumericsError):
        StateVector(np.array([1.0, 1.0]), 1)
