"""Sparse Pauli-string algebra.

Operators on n qubits are stored as linear combinations of Pauli strings
("letters"), never as dense matrices.  Conventions used throughout the
package:

* qubits are numbered 1..n;
* position ``k`` (0-based) of a letters string holds the operator on
  qubit ``k + 1``;
* qubit 1 is the most significant bit of a computational-basis index.

Products and commutators of Pauli strings are again single Pauli strings
(up to a phase), which keeps every algebraic operation sparse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, Mapping

from .errors import ConfigError

PAULI_LETTERS = "IXYZ"

# (a, b) -> (phase, a*b) for single-site Pauli products.
_SITE_PRODUCT: Dict[tuple, tuple] = {}
for _p in PAULI_LETTERS:
    _SITE_PRODUCT[("I", _p)] = (1.0, _p)
    _SITE_PRODUCT[(_p, "I")] = (1.0, _p)
    _SITE_PRODUCT[(_p, _p)] = (1.0, "I")
for _a, _b, _c in (("X", "Y", "Z"), ("Y", "Z", "X"), ("Z", "X", "Y")):
    _SITE_PRODUCT[(_a, _b)] = (1j, _c)
    _SITE_PRODUCT[(_b, _a)] = (-1j, _c)


def _validate_letters(letters: str) -> str:
    if not letters or any(c not in PAULI_LETTERS for c in letters):
        raise ConfigError(f"invalid Pauli letters {letters!r}")
    return letters


@dataclass(frozen=True)
class PauliTerm:
    """A single Pauli string with a complex coefficient."""

    letters: str
    coeff: complex = 1.0 + 0.0j

    def __post_init__(self):
        _validate_letters(self.letters)
        object.__setattr__(self, "coeff", complex(self.coeff))

    @property
    def n(self) -> int:
        return len(self.letters)

    @classmethod
    def from_sites(cls, n: int, sites: Mapping[int, str], coeff: complex = 1.0) -> "PauliTerm":
        """Build a term from a {qubit: letter} mapping, qubits 1-based."""
        letters = ["I"] * n
        for q, letter in sites.items():
            if not 1 <= q <= n:
                raise ConfigError(f"qubit {q} outside 1..{n}")
            letters[q - 1] = letter
        return cls("".join(letters), coeff)

    @classmethod
    def identity(cls, n: int, coeff: complex = 1.0) -> "PauliTerm":
        return cls("I" * n, coeff)

    def __mul__(self, other: "PauliTerm") -> "PauliTerm":
        if not isinstance(other, PauliTerm):
            return NotImplemented
        if other.n != self.n:
            raise ConfigError(f"size mismatch: {self.n} vs {other.n}")
        phase = 1.0 + 0.0j
        out = []
        for a, b in zip(self.letters, other.letters):
            p, c = _SITE_PRODUCT[(a, b)]
            phase *= p
            out.append(c)
        return PauliTerm("".join(out), self.coeff * other.coeff * phase)

    def scaled(self, factor: complex) -> "PauliTerm":
        return PauliTerm(self.letters, self.coeff * factor)

    def dagger(self) -> "PauliTerm":
        return PauliTerm(self.letters, self.coeff.conjugate())

    def commutes_with(self, other: "PauliTerm") -> bool:
        """Pauli strings either commute or anticommute; count anticommuting sites."""
        anti = sum(
            1
            for a, b in zip(self.letters, other.letters)
            if a != "I" and b != "I" and a != b
        )
        return anti % 2 == 0

    def commutator(self, other: "PauliTerm") -> "PauliTerm | None":
        """[self, other]; ``None`` when the strings commute (zero operator)."""
        if self.commutes_with(other):
            return None
        return (self * other).scaled(2.0)

    def __repr__(self) -> str:
        return f"PauliTerm({self.letters!r}, {self.coeff!r})"


class OperatorSum:
    """Linear combination of Pauli strings with canonical term merging.

    Terms with equal letter patterns are merged on insert and coefficients
    below ``drop_tol`` are removed, so no two stored terms share a pattern.
    """

    drop_tol = 1e-14

    def __init__(self, terms: Iterable[PauliTerm] | None = None, n: int | None = None):
        self._coeffs: Dict[str, complex] = {}
        self._n = n
        if terms is not None:
            for t in terms:
                self.add_term(t)
        if self._n is None:
            raise ConfigError("OperatorSum needs at least one term or an explicit n")

    @classmethod
    def from_coeffs(cls, coeffs: Mapping[str, complex], n: int) -> "OperatorSum":
        op = cls(None, n=n)
        for letters, c in coeffs.items():
            op.add_term(PauliTerm(letters, c))
        return op

    @classmethod
    def zero(cls, n: int) -> "OperatorSum":
        return cls(None, n=n)

    def add_term(self, term: PauliTerm) -> None:
        if self._n is None:
            self._n = term.n
        elif term.n != self._n:
            raise ConfigError(f"size mismatch: {term.n} vs {self._n}")
        c = self._coeffs.get(term.letters, 0.0) + term.coeff
        if abs(c) <= self.drop_tol:
            self._coeffs.pop(term.letters, None)
        else:
            self._coeffs[term.letters] = c

    @property
    def n(self) -> int:
        return self._n

    @property
    def terms(self) -> list:
        """Terms in deterministic (lexicographic) order."""
        return [PauliTerm(k, self._coeffs[k]) for k in sorted(self._coeffs)]

    def coeff(self, letters: str) -> complex:
        return self._coeffs.get(letters, 0.0)

    def coeffs(self) -> Dict[str, complex]:
        return dict(self._coeffs)

    def __len__(self) -> int:
        return len(self._coeffs)

    def __iter__(self) -> Iterator[PauliTerm]:
        return iter(self.terms)

    def __add__(self, other: "OperatorSum") -> "OperatorSum":
        out = OperatorSum(self.terms, n=self._n)
        for t in other.terms:
            out.add_term(t)
        return out

    def __sub__(self, other: "OperatorSum") -> "OperatorSum":
        return self + other.scaled(-1.0)

    def scaled(self, factor: complex) -> "OperatorSum":
        return OperatorSum((t.scaled(factor) for t in self.terms), n=self._n)

    def __matmul__(self, other: "OperatorSum") -> "OperatorSum":
        """Operator product, expanded term by term."""
        out = OperatorSum.zero(max(self._n, other.n))
        for a in self.terms:
            for b in other.terms:
                out.add_term(a * b)
        return out

    def commutator(self, other: "OperatorSum") -> "OperatorSum":
        out = OperatorSum.zero(self._n)
        for a in self.terms:
            for b in other.terms:
                c = a.commutator(b)
                if c is not None:
                    out.add_term(c)
        return out

    def dagger(self) -> "OperatorSum":
        return OperatorSum((t.dagger() for t in self.terms), n=self._n)

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        """Hermitian iff every merged coefficient is real (Pauli strings are Hermitian)."""
        return all(abs(c.imag) <= tol for c in self._coeffs.values())

    def trace(self) -> complex:
        """Plain matrix trace; only the identity string contributes."""
        return self._coeffs.get("I" * self._n, 0.0) * (2 ** self._n)

    def hs_inner(self, other: "OperatorSum") -> complex:
        """Hilbert-Schmidt inner product Tr(self^dag other) with the plain trace."""
        if other.n != self._n:
            raise ConfigError(f"size mismatch: {other.n} vs {self._n}")
        small, big = self._coeffs, other._coeffs
        if len(big) < len(small):
            acc = sum(big[k].conjugate() * small[k] for k in big if k in small)
            acc = acc.conjugate()
        else:
            acc = sum(small[k].conjugate() * big[k] for k in small if k in big)
        return acc * (2 ** self._n)

    def hs_norm(self) -> float:
        return abs(self.hs_inner(self)) ** 0.5

    def __repr__(self) -> str:
        inner = " + ".join(f"({c:.6g})*{k}" for k, c in sorted(self._coeffs.items()))
        return f"OperatorSum[n={self._n}: {inner or '0'}]"
