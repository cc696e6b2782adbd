import numpy as np
import pytest

from oracles import dense_lie_closure_dim, kron_matrix
from qpace.dla import (LieBasis, g_purity, generator_fingerprint, lie_closure,
                       load_basis, matchgate_generators, pg_score, save_basis,
                       variance_estimate)
from qpace.errors import ArtifactError, ConfigError, NumericsError
from qpace.paulis import OperatorSum, PauliTerm
from qpace.states import StateVector

MATCHGATE_DIM_N8 = 120  # pinned regression constant from the sparse engine


def su2_basis():
    return lie_closure([OperatorSum([PauliTerm("X")]), OperatorSum([PauliTerm("Z")])])


def test_singleton_abelian():
    basis = lie_closure([OperatorSum([PauliTerm("Z")])])
    assert basis.dim == 1
    elem = basis.elements[0]
    assert elem.coeff("Z") == pytest.approx(1 / np.sqrt(2))


def test_su2_dimension():
    basis = su2_basis()
    assert basis.dim == 3
    letters = {next(iter(e.terms)).letters for e in basis.elements}
    assert letters == {"X", "Y", "Z"}


@pytest.mark.parametrize("n", [2, 3, 4])
def test_matchgate_dims_match_dense_oracle(n):
    gens = matchgate_generators(n)
    basis = lie_closure(gens)
    oracle_dim = dense_lie_closure_dim([kron_matrix(g) for g in gens])
    assert basis.dim == oracle_dim
    gram = basis.gram_matrix()
    assert np.max(np.abs(gram - np.eye(basis.dim))) < 1e-10


def test_matchgate_n8_regression(matchgate_basis):
    assert matchgate_basis.dim == MATCHGATE_DIM_N8
    gram = matchgate_basis.gram_matrix()
    assert np.max(np.abs(gram - np.eye(MATCHGATE_DIM_N8))) < 1e-10


def test_closure_under_commutators():
    for n in (2, 3, 4):
        basis = lie_closure(matchgate_generators(n))
        for a in basis.elements:
            for b in basis.elements:
                c = a.commutator(b).scaled(-1j)
                norm_sq = c.hs_inner(c).real
                if norm_sq < 1e-20:
                    continue
                assert g_purity(c, basis) == pytest.approx(norm_sq, abs=1e-8)


def test_closure_under_commutators_sampled_n8(matchgate_basis, rng):
    elems = matchgate_basis.elements
    for _ in range(40):
        a, b = rng.choice(len(elems), size=2, replace=False)
        c = elems[a].commutator(elems[b]).scaled(-1j)
        norm_sq = c.hs_inner(c).real
        if norm_sq < 1e-20:
            continue
        assert g_purity(c, matchgate_basis) == pytest.approx(norm_sq, abs=1e-8)


def test_traceless_when_generators_traceless(matchgate_basis):
    for e in matchgate_basis.elements:
        assert abs(e.trace()) < 1e-12


def test_closure_cap():
    with pytest.raises(NumericsError):
        lie_closure(matchgate_generators(4), cap=10)


def test_generator_validation():
    with pytest.raises(ConfigError):
        lie_closure([])
    with pytest.raises(ConfigError):
        lie_closure([OperatorSum([PauliTerm("X", 1j)])])
    with pytest.raises(ConfigError):
        lie_closure([OperatorSum.zero(2)])


def test_g_purity_single_qubit_state():
    basis = lie_closure([OperatorSum([PauliTerm("Z")])])
    assert g_purity(StateVector.computational(1, 0), basis) == pytest.approx(0.5)
    assert pg_score(StateVector.computational(1, 0), basis) == pytest.approx(0.5)


def test_g_purity_pure_state_su2():
    assert g_purity(StateVector.computational(1, 0), su2_basis()) == pytest.approx(0.5)


def test_g_purity_maximally_mixed_is_zero():
    # the maximally mixed state has no overlap with any traceless element
    mixed = OperatorSum([PauliTerm("II", 0.25)])
    basis = lie_closure(matchgate_generators(2))
    assert g_purity(mixed, basis) == pytest.approx(0.0, abs=1e-12)


def test_variance_estimate_values():
    basis = su2_basis()
    rho = StateVector.computational(1, 0)
    obs = OperatorSum([PauliTerm("Z")])
    # hand evaluation under the plain-trace convention: P(rho) = 1/2,
    # P(Z) = |Tr(Z/sqrt2 * Z)|^2 = 2, dim = 3 -> 1/2 * 2 / 3 = 1/3
    assert variance_estimate(rho, obs, basis) == pytest.approx(1.0 / 3.0)
    # observable entirely outside the span
    outside = OperatorSum([PauliTerm("I", 1.0)])
    assert variance_estimate(rho, outside, basis) == pytest.approx(0.0, abs=1e-12)
    mixed = OperatorSum([PauliTerm("I", 0.5)])
    assert variance_estimate(mixed, obs, basis) == pytest.approx(0.0, abs=1e-12)


def test_g_purity_operator_matches_dense(matchgate_basis, rng):
    # dense cross-check of the sparse projection at small n
    for n in (2, 3, 4):
        basis = lie_closure(matchgate_generators(n))
        dense_basis = [kron_matrix(e) for e in basis.elements]
        for _ in range(5):
            psi = StateVector.random(n, rng)
            rho = np.outer(psi.amplitudes, psi.amplitudes.conj())
            dense_val = sum(abs(np.trace(b.conj().T @ rho)) ** 2 for b in dense_basis)
            assert g_purity(psi, basis) == pytest.approx(dense_val, abs=1e-9)


def test_bessel_bound(matchgate_basis, rng):
    from qpace.dla import g_purity_states

    states = np.stack([StateVector.random(8, rng).amplitudes for _ in range(200)])
    purities = g_purity_states(states, matchgate_basis)
    assert np.all(purities <= 1.0 + 1e-10)
    scores = 1.0 - np.clip(purities, 0.0, 1.0)
    assert np.all((scores >= 0.0) & (scores <= 1.0))


def test_basis_choice_independence(rng):
    gens = matchgate_generators(4)
    basis_a = lie_closure(gens)
    order = rng.permutation(len(gens))
    basis_b = lie_closure([gens[i] for i in order])
    assert basis_a.dim == basis_b.dim
    for _ in range(100):
        psi = StateVector.random(4, rng)
        assert g_purity(psi, basis_a) == pytest.approx(g_purity(psi, basis_b), abs=1e-9)


def test_dimension_mismatch(matchgate_basis):
    with pytest.raises(ConfigError):
        g_purity(StateVector.computational(2, 0), matchgate_basis)


def test_basis_roundtrip(tmp_path):
    gens = matchgate_generators(3)
    basis = lie_closure(gens)
    path = tmp_path / "basis.txt"
    save_basis(basis, path)
    back = load_basis(path, expected_generators=gens)
    assert back.dim == basis.dim
    assert back.generator_fingerprint == basis.generator_fingerprint
    for a, b in zip(basis.elements, back.elements):
        assert a.coeffs() == b.coeffs()


def test_basis_fingerprint_mismatch(tmp_path):
    basis = lie_closure(matchgate_generators(3))
    path = tmp_path / "basis.txt"
    save_basis(basis, path)
    with pytest.raises(ArtifactError):
        load_basis(path, expected_generators=matchgate_generators(4)[:5])


def test_basis_tamper_detection(tmp_path):
    basis = lie_closure(matchgate_generators(3))
    path = tmp_path / "basis.txt"
    save_basis(basis, path)
    text = path.read_text().replace("0.353553", "0.453553", 1)
    path.write_text(text)
    with pytest.raises(ArtifactError):
        load_basis(path)


def test_fingerprint_order_independent():
    gens = matchgate_generators(4)
    assert generator_fingerprint(gens) == generator_fingerprint(list(reversed(gens)))
