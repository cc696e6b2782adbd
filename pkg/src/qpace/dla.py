"""Dynamical Lie algebra closure and the physics-inspired score.

The closure works entirely in the sparse Pauli-coefficient representation:
a commutator of two Pauli strings is again a single Pauli string, so basis
elements are small real-coefficient combinations and never touch a 2^n
matrix.  Basis elements are Hermitian representatives (i * anti-Hermitian
algebra elements) orthonormalized under the plain-trace Hilbert-Schmidt
inner product, Tr(B_j B_k) = delta_jk.  With that convention the purity of
a pure state obeys the Bessel bound P <= Tr(rho^2) = 1 exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .errors import ArtifactError, ConfigError, NumericsError
from .paulis import OperatorSum, PauliTerm
from .persist import atomic_write_text
from .states import StateVector, pauli_action

CLOSURE_DIM_CAP = 4096
INDEPENDENCE_TOL = 1e-10

BASIS_FORMAT_VERSION = 1


def matchgate_generators(n: int) -> List[OperatorSum]:
    """The free-fermion generator set {Z_i} for i=1..n and {X_i X_{i+1}} for i=1..n-1."""
    gens = [OperatorSum([PauliTerm.from_sites(n, {i: "Z"})]) for i in range(1, n + 1)]
    gens += [OperatorSum([PauliTerm.from_sites(n, {i: "X", i + 1: "X"})])
             for i in range(1, n)]
    return gens


def generator_fingerprint(generators: Sequence[OperatorSum]) -> str:
    """Order-independent digest of a generating set."""
    canon = sorted(
        json.dumps([[t.letters, t.coeff.real, t.coeff.imag] for t in g.terms])
        for g in generators
    )
    return hashlib.sha256("\n".join(canon).encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Sparse real-coefficient vectors over Pauli patterns


def _as_real_coeffs(op: OperatorSum, tol: float = 1e-10) -> Dict[str, float]:
    coeffs = op.coeffs()
    if any(abs(c.imag) > tol * max(1.0, abs(c)) for c in coeffs.values()):
        raise ConfigError("operator is not Hermitian in the Pauli basis")
    return {k: c.real for k, c in coeffs.items()}


def _inner(a: Dict[str, float], b: Dict[str, float], dim_factor: float) -> float:
    if len(b) < len(a):
        a, b = b, a
    return dim_factor * sum(v * b[k] for k, v in a.items() if k in b)


def _axpy(y: Dict[str, float], alpha: float, x: Dict[str, float]) -> None:
    for k, v in x.items():
        y[k] = y.get(k, 0.0) + alpha * v
        if abs(y[k]) < 1e-300:
            del y[k]


def _minus_i_commutator(a: Dict[str, float], b: Dict[str, float], n: int) -> Dict[str, float]:
    """-i[A, B] for Hermitian A, B given as real Pauli-coefficient dicts."""
    out: Dict[str, float] = {}
    for ka, va in a.items():
        ta = PauliTerm(ka)
        for kb, vb in b.items():
            c = ta.commutator(PauliTerm(kb))
            if c is None:
                continue
            val = -1j * c.coeff * va * vb
            if abs(val.real) < 1e-14 and abs(val.imag) > 1e-12:
                raise NumericsError("commutator of Hermitian elements lost Hermiticity")
            out[c.letters] = out.get(c.letters, 0.0) + val.real
    return {k: v for k, v in out.items() if abs(v) > 1e-14}


@dataclass
class LieBasis:
    """Hilbert-Schmidt orthonormal Hermitian basis of the dynamical Lie algebra."""

    elements: List[OperatorSum]
    n: int
    generator_fingerprint: str
    _compiled: list = field(default_factory=list, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return len(self.elements)

    def gram_matrix(self) -> np.ndarray:
        g = np.empty((self.dim, self.dim))
        vecs = [_as_real_coeffs(e) for e in self.elements]
        f = 2.0 ** self.n
        for i, a in enumerate(vecs):
            for j, b in enumerate(vecs):
                g[i, j] = _inner(a, b, f)
        return g

    def compiled(self) -> list:
        """Per element: list of (coeff, perm, phase) for batched expectations."""
        if not self._compiled:
            for e in self.elements:
                entry = []
                for t in e.terms:
                    perm, phase = pauli_action(t.letters)
                    entry.append((t.coeff.real, perm, phase))
                self._compiled.append(entry)
        return self._compiled


def lie_closure(generators: Sequence[OperatorSum], cap: int = CLOSURE_DIM_CAP,
                tol: float = INDEPENDENCE_TOL) -> LieBasis:
    """Close the generator set under commutators, orthonormalizing as it grows.

    New candidates come from -i[g, b] with g a generator and b a current
    basis element; each is orthogonalized against the span (two passes of
    modified Gram-Schmidt) and kept when its residual norm exceeds ``tol``.
    """
    if not generators:
        raise ConfigError("need at least one generator")
    n = generators[0].n
    if any(g.n != n for g in generators):
        raise ConfigError("generators act on different register sizes")
    if any(len(g) == 0 for g in generators):
        raise ConfigError("zero operator is not a valid generator")
    if any(not g.is_hermitian() for g in generators):
        raise ConfigError("generators must be Hermitian")

    dim_factor = 2.0 ** n
    gen_vecs = [_as_real_coeffs(g) for g in generators]
    basis: List[Dict[str, float]] = []

    def try_add(vec: Dict[str, float]) -> bool:
        vec = dict(vec)
        for _ in range(2):
            for b in basis:
                _axpy(vec, -_inner(b, vec, dim_factor), b)
        norm = np.sqrt(max(_inner(vec, vec, dim_factor), 0.0))
        if norm <= tol:
            return False
        inv = 1.0 / norm
        basis.append({k: v * inv for k, v in vec.items() if abs(v * inv) > 1e-15})
        if len(basis) > cap:
            raise NumericsError(
                f"Lie closure exceeded the {cap}-dimension cap; the algebra is "
                "intractably large for this score")
        return True

    frontier = [v for v in gen_vecs if try_add(v)]
    while frontier:
        new: List[Dict[str, float]] = []
        for g in gen_vecs:
            for b in frontier:
                cand = _minus_i_commutator(g, b, n)
                if cand and try_add(cand):
                    new.append(basis[-1])
        frontier = new

    elements = [
        OperatorSum((PauliTerm(k, v) for k, v in sorted(vec.items())), n=n)
        for vec in basis
    ]
    return LieBasis(elements, n, generator_fingerprint(generators))


# ---------------------------------------------------------------------------
# g-purity, variance estimate, score


def g_purity_states(states: np.ndarray, basis: LieBasis) -> np.ndarray:
    """P_g for a batch of pure states, amplitudes shaped (..., 2^n)."""
    states = np.asarray(states, dtype=np.complex128)
    if states.shape[-1] != 2 ** basis.n:
        raise ConfigError("state dimension does not match the basis register")
    total = np.zeros(states.shape[:-1])
    conj = np.conj(states)
    for entry in basis.compiled():
        val = np.zeros(states.shape[:-1], dtype=np.complex128)
        for coeff, perm, phase in entry:
            val += coeff * np.sum(conj * (states[..., perm] * phase), axis=-1)
        total += val.real ** 2
    return total


def g_purity(target, basis: LieBasis) -> float:
    """Sum of squared Hilbert-Schmidt overlaps with the basis (plain trace).

    Accepts a Hermitian operator or a pure state; states enter through the
    projector, Tr(B_j |psi><psi|) = <psi|B_j|psi>.
    """
    if isinstance(target, StateVector):
        if target.n != basis.n:
            raise ConfigError(f"state on {target.n} qubits, basis on {basis.n}")
        return float(g_purity_states(target.amplitudes[None, :], basis)[0])
    if isinstance(target, OperatorSum):
        if target.n != basis.n:
            raise ConfigError(f"operator on {target.n} qubits, basis on {basis.n}")
        vec = _as_real_coeffs(target)
        f = 2.0 ** basis.n
        return float(sum(_inner(_as_real_coeffs(e), vec, f) ** 2 for e in basis.elements))
    raise ConfigError(f"unsupported g-purity input type {type(target)!r}")


def variance_estimate(rho, observable: OperatorSum, basis: LieBasis) -> float:
    """Loss-variance estimate P_g(rho) * P_g(O) / dim(g) under the 2-design assumption."""
    return g_purity(rho, basis) * g_purity(observable, basis) / basis.dim


def pg_score(psi: StateVector, basis: LieBasis) -> float:
    """Score 1 - P_g(psi); in [0, 1] by the Bessel bound, clamped against roundoff."""
    return float(min(1.0, max(0.0, 1.0 - g_purity(psi, basis))))


def pg_scores_batch(states: np.ndarray, basis: LieBasis) -> np.ndarray:
    return np.clip(1.0 - g_purity_states(states, basis), 0.0, 1.0)


# ---------------------------------------------------------------------------
# Basis cache files


def save_basis(basis: LieBasis, path: str | Path) -> None:
    lines = [
        f"# qpace lie basis v{BASIS_FORMAT_VERSION}",
        f"n={basis.n}",
        f"dim={basis.dim}",
        f"fingerprint={basis.generator_fingerprint}",
    ]
    for i, e in enumerate(basis.elements):
        lines.append(f"element {i}")
        for t in e.terms:
            lines.append(f"{t.letters} {t.coeff.real!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_basis(path: str | Path,
               expected_generators: Sequence[OperatorSum] | None = None) -> LieBasis:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"no basis cache at {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(f"# qpace lie basis v{BASIS_FORMAT_VERSION}"):
        raise ArtifactError(f"unrecognized basis file header in {path}")
    header = dict(l.split("=", 1) for l in lines[1:4])
    n, dim = int(header["n"]), int(header["dim"])
    fingerprint = header["fingerprint"]
    if expected_generators is not None:
        expect = generator_fingerprint(expected_generators)
        if expect != fingerprint:
            raise ArtifactError(
                f"basis fingerprint {fingerprint} does not match the configured "
                f"generators ({expect}); refusing the cache")
    elements: List[OperatorSum] = []
    current: List[PauliTerm] = []
    for line in lines[4:]:
        if not line.strip():
            continue
        if line.startswith("element"):
            if current:
                elements.append(OperatorSum(current, n=n))
            current = []
        else:
            letters, coeff = line.split()
            current.append(PauliTerm(letters, float(coeff)))
    if current:
        elements.append(OperatorSum(current, n=n))
    if len(elements) != dim:
        raise ArtifactError(f"basis file lists {len(elements)} elements, header says {dim}")
    basis = LieBasis(elements, n, fingerprint)
    gram = basis.gram_matrix()
    if np.max(np.abs(gram - np.eye(dim))) > 1e-8:
        raise ArtifactError("basis cache failed the orthonormality check (tampered?)")
    return basis
