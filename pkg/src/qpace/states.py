"""Statevectors and the operations connecting them to Pauli operators.

Amplitude indexing follows the package-wide convention: qubit 1 is the most
significant bit of the basis index, so ``|b1 b2 ... bn>`` lives at index
``b1*2^(n-1) + ... + bn``.

The action of a Pauli string on a basis state is a bit permutation plus a
diagonal phase, which lets every operator application run as vectorized
index arithmetic.  The batched helpers accept amplitude arrays of shape
``(..., 2^n)`` and are the computational core of the circuit simulator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import ConfigError, NumericsError
from .paulis import OperatorSum, PauliTerm

DENSE_QUBIT_CAP = 12

_SINGLE_SITE = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


@dataclass(frozen=True)
class StateVector:
    """Unit-norm vector of 2^n complex amplitudes."""

    amplitudes: np.ndarray
    n: int

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (2 ** self.n,):
            raise ConfigError(f"expected {2 ** self.n} amplitudes, got {amps.shape}")
        object.__setattr__(self, "amplitudes", amps)
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > 1e-10:
            raise NumericsError(f"state norm {norm} deviates from 1 beyond 1e-10")

    @classmethod
    def computational(cls, n: int, bits: str | int = 0) -> "StateVector":
        """Basis state |bits>, bits given as '0110' (qubit 1 first) or an index."""
        idx = int(bits, 2) if isinstance(bits, str) else int(bits)
        amps = np.zeros(2 ** n, dtype=np.complex128)
        amps[idx] = 1.0
        return cls(amps, n)

    @classmethod
    def from_amplitudes(cls, amps: np.ndarray, normalize: bool = False) -> "StateVector":
        amps = np.asarray(amps, dtype=np.complex128)
        n = int(amps.size).bit_length() - 1
        if 2 ** n != amps.size:
            raise ConfigError(f"amplitude count {amps.size} is not a power of two")
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(amps, n)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "StateVector":
        """Haar-random state (normalized complex Gaussian amplitudes)."""
        v = rng.normal(size=2 ** n) + 1j * rng.normal(size=2 ** n)
        return cls(v / np.linalg.norm(v), n)

    def probs(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def _bit_parity(indices: np.ndarray, mask: int) -> np.ndarray:
    """Parity of popcount(indices & mask); mask has at most n set bits."""
    par = np.zeros(indices.shape, dtype=np.int64)
    bit = 0
    m = mask
    while m:
        if m & 1:
            par ^= (indices >> bit) & 1
        m >>= 1
        bit += 1
    return par


def pauli_action(letters: str) -> Tuple[np.ndarray, np.ndarray]:
    """Precompute the action of a Pauli string as (perm, phase).

    For P with letters on n qubits: (P psi)[j] = phase[j] * psi[perm[j]].
    """
    n = len(letters)
    dim = 2 ** n
    flip = 0
    phase_mask = 0  # Y and Z sites pick up (-1)^bit
    n_y = 0
    for pos, letter in enumerate(letters):
        bit = n - 1 - pos  # qubit pos+1 -> bit position
        if letter in ("X", "Y"):
            flip |= 1 << bit
        if letter in ("Y", "Z"):
            phase_mask |= 1 << bit
        if letter == "Y":
            n_y += 1
    idx = np.arange(dim, dtype=np.int64)
    perm = idx ^ flip
    signs = 1.0 - 2.0 * _bit_parity(perm, phase_mask)
    phase = (1j ** n_y) * signs.astype(np.complex128)
    return perm, phase


def apply_pauli_string(letters: str, amps: np.ndarray,
                       perm: np.ndarray | None = None,
                       phase: np.ndarray | None = None) -> np.ndarray:
    """Apply a coefficient-1 Pauli string to amplitudes of shape (..., 2^n)."""
    if perm is None or phase is None:
        perm, phase = pauli_action(letters)
    return amps[..., perm] * phase


def pauli_apply(term: PauliTerm, psi: StateVector) -> StateVector:
    """coefficient * (P |psi>); unit norm is only preserved when |coefficient| = 1."""
    if term.n != psi.n:
        raise ConfigError(f"operator on {term.n} qubits, state on {psi.n}")
    out = term.coeff * apply_pauli_string(term.letters, psi.amplitudes)
    sv = object.__new__(StateVector)
    object.__setattr__(sv, "amplitudes", out)
    object.__setattr__(sv, "n", psi.n)
    return sv


def expectations_batch(op: OperatorSum, amps: np.ndarray) -> np.ndarray:
    """<psi|op|psi> for a batch of states, amps shape (..., 2^n); returns real array."""
    vals = np.zeros(amps.shape[:-1], dtype=np.complex128)
    for term in op.terms:
        perm, phase = pauli_action(term.letters)
        vals += term.coeff * np.sum(np.conj(amps) * (amps[..., perm] * phase), axis=-1)
    if np.max(np.abs(vals.imag), initial=0.0) > 1e-10:
        raise NumericsError("expectation has imaginary residue above 1e-10")
    return vals.real


def expectation(op: OperatorSum, psi: StateVector) -> float:
    """<psi|H|psi> for Hermitian H; imaginary residue must stay below 1e-10."""
    if op.n != psi.n:
        raise ConfigError(f"operator on {op.n} qubits, state on {psi.n}")
    if not op.is_hermitian():
        raise ConfigError("expectation requires a Hermitian operator")
    return float(expectations_batch(op, psi.amplitudes[None, :])[0])


def dense_matrix(op: OperatorSum, cap: int = DENSE_QUBIT_CAP) -> np.ndarray:
    """Dense 2^n x 2^n matrix; equals the Kronecker product with qubit 1 leftmost.

    Each Pauli string is a (permutation x diagonal-phase) matrix, so the term
    contributes exactly one entry per row.
    """
    if op.n > cap:
        raise ConfigError(f"dense matrix for n={op.n} exceeds cap {cap}")
    dim = 2 ** op.n
    out = np.zeros((dim, dim), dtype=np.complex128)
    idx = np.arange(dim)
    for term in op.terms:
        perm, phase = pauli_action(term.letters)
        out[idx, perm] += term.coeff * phase
    return out


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    """Make the first amplitude of magnitude > 1e-8 real positive."""
    for a in vec:
        if abs(a) > 1e-8:
            return vec * (a.conjugate() / abs(a))
    return vec


def ground_state_with_gap(op: OperatorSum, cap: int = DENSE_QUBIT_CAP):
    """(energy, state, spectral gap) from a full Hermitian eigendecomposition."""
    if not op.is_hermitian():
        raise ConfigError("ground state requires a Hermitian operator")
    h = dense_matrix(op, cap=cap)
    try:
        evals, evecs = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericsError(f"eigensolver failed: {exc}") from exc
    energy = float(evals[0])
    vec = _fix_phase(evecs[:, 0])
    vec = vec / np.linalg.norm(vec)
    residual = float(np.linalg.norm(h @ vec - energy * vec))
    if residual >= 1e-8:
        raise NumericsError(f"ground-state residual {residual} above 1e-8")
    gap = float(evals[1] - evals[0]) if len(evals) > 1 else np.inf
    return energy, StateVector(vec, op.n), gap


def ground_state(op: OperatorSum, cap: int = DENSE_QUBIT_CAP):
    """(minimum eigenvalue, corresponding unit eigenvector with fixed global phase)."""
    energy, psi, _ = ground_state_with_gap(op, cap=cap)
    return energy, psi


def marginal_probs_batch(amps: np.ndarray, n: int, qubits: Sequence[int]) -> np.ndarray:
    """Outcome distribution on an ordered qubit subset, batched over leading axes.

    The first listed qubit is the most significant bit of the outcome index.
    """
    qubits = list(qubits)
    if len(set(qubits)) != len(qubits) or any(not 1 <= q <= n for q in qubits):
        raise ConfigError(f"invalid qubit subset {qubits} for n={n}")
    lead = amps.shape[:-1]
    probs = (np.abs(amps) ** 2).reshape(lead + (2,) * n)
    other_axes = [len(lead) + k for k in range(n) if (k + 1) not in qubits]
    probs = probs.sum(axis=tuple(other_axes)) if other_axes else probs
    # after the sum, kept axes appear in increasing qubit order; restore the listed order
    rank = {q: r for r, q in enumerate(sorted(qubits))}
    perm_axes = [len(lead) + rank[q] for q in qubits]
    probs = np.transpose(probs, tuple(range(len(lead))) + tuple(perm_axes))
    return probs.reshape(lead + (2 ** len(qubits),))


def marginal_probs(psi: StateVector, qubits: Sequence[int]) -> np.ndarray:
    return marginal_probs_batch(psi.amplitudes, psi.n, qubits)
