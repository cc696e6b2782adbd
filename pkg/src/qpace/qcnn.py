"""The 8-to-2 qubit quantum convolutional classifier.

Two variants share the same layout (two conv+pool stages, register sizes
8 -> 4 -> 2, output qubits 1 and 2):

* ``full`` - conv layers apply a 15-parameter two-qubit block (single-qubit
  Euler rotations around an XX+YY+ZZ entangler) on a brick pattern, sharing
  parameters within the layer; pooling applies one controlled-Y rotation per
  discarded qubit (deferred measurement), again with a shared angle.
* ``matchgate`` - every gate is exp(-i theta G) with G drawn from the
  free-fermion generator set {Z_i} u {X_i X_{i+1}}; pooling entangles the
  to-be-discarded block with XX rotations before it is marginalized out,
  since controlled rotations have no generator in that set.

All gates are Pauli-generated rotations, so application reduces to an index
permutation, a diagonal phase, and an axpy; amplitudes of shape (B, 2^n)
flow through the circuit batched.  Gradients are computed in adjoint mode
(one forward pass, one reverse sweep) and are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, NumericsError
from .paulis import OperatorSum, PauliTerm
from .states import StateVector, marginal_probs_batch, pauli_action

VARIANTS = ("full", "matchgate")
CONV_BLOCK_PARAMS = 15


@dataclass(frozen=True)
class Gate:
    """One parameterized gate: U = exp(-i * angle_factor * theta * P).

    ``pauli`` holds the generator letters on ``qubits`` (1-based).  For
    ``kind == "crot"`` the rotation additionally only acts on the subspace
    where ``control`` is 1 (a controlled rotation).
    """

    kind: str
    qubits: Tuple[int, ...]
    pauli: str
    param: int
    control: Optional[int] = None
    angle_factor: float = 0.5

    def full_letters(self, n: int) -> str:
        letters = ["I"] * n
        for q, p in zip(self.qubits, self.pauli):
            letters[q - 1] = p
        return "".join(letters)

    def generator(self, n: int) -> OperatorSum:
        """The gate generator as an operator on the full register.

        For plain rotations this is the Pauli string itself; for controlled
        rotations it is the projected string |1><1|_c (x) P.
        """
        base = PauliTerm(self.full_letters(n))
        if self.kind == "rot":
            return OperatorSum([base])
        proj_z = PauliTerm.from_sites(n, {self.control: "Z"})
        return OperatorSum([base.scaled(0.5), (proj_z * base).scaled(-0.5)])


@dataclass(frozen=True)
class LayerInfo:
    kind: str                       # "conv" | "pool"
    active: Tuple[int, ...]
    param_slots: Tuple[int, ...]
    pairs: Tuple[Tuple[int, int], ...] = ()       # conv: coupled pairs
    measured: Tuple[int, ...] = ()                # pool: discarded qubits
    kept: Tuple[int, ...] = ()                    # pool: surviving qubits


class _CompiledGate:
    """Gate action precomputed as (perm, phase) on the full Hilbert space.

    Generators without X/Y letters leave basis states in place (``perm`` is
    the identity), so those rotations reduce to one diagonal multiply.
    """

    __slots__ = ("slot", "factor", "perm", "phase", "ctrl_mask", "diagonal")

    def __init__(self, gate: Gate, n: int):
        self.slot = gate.param
        self.factor = gate.angle_factor
        self.perm, self.phase = pauli_action(gate.full_letters(n))
        self.diagonal = bool(np.all(self.perm == np.arange(2 ** n)))
        if gate.kind == "crot":
            bit = n - gate.control
            idx = np.arange(2 ** n, dtype=np.int64)
            self.ctrl_mask = ((idx >> bit) & 1).astype(bool)
        else:
            self.ctrl_mask = None

    def pauli_apply(self, amps: np.ndarray) -> np.ndarray:
        """The (control-projected) generator string applied to amplitudes."""
        out = self.phase * amps if self.diagonal else amps[..., self.perm] * self.phase
        if self.ctrl_mask is not None:
            out = np.where(self.ctrl_mask, out, 0.0)
        return out

    def apply(self, amps: np.ndarray, theta: float, inverse: bool = False,
              pauli_amps: np.ndarray | None = None) -> np.ndarray:
        a = self.factor * theta
        c, s = np.cos(a), (-np.sin(a) if inverse else np.sin(a))
        if pauli_amps is None:
            pauli_amps = self.pauli_apply(amps)
        if self.ctrl_mask is None:
            return c * amps - 1j * s * pauli_amps
        # pauli_apply already zeroes the control-0 block
        return np.where(self.ctrl_mask, c * amps, amps) - 1j * s * pauli_amps


@dataclass(frozen=True)
class QcnnArchitecture:
    variant: str
    n_in: int
    n_out: int
    output_qubits: Tuple[int, ...]
    gates: Tuple[Gate, ...]
    layers: Tuple[LayerInfo, ...]
    total_params: int
    _compiled: list = field(default_factory=list, repr=False, compare=False)
    _outcome_of_basis: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def compiled(self) -> List[_CompiledGate]:
        if not self._compiled:
            self._compiled.extend(_CompiledGate(g, self.n_in) for g in self.gates)
        return self._compiled

    def outcome_of_basis(self) -> np.ndarray:
        """Outcome index on the output qubits for every full-register basis index."""
        if self._outcome_of_basis is None:
            idx = np.arange(2 ** self.n_in, dtype=np.int64)
            out = np.zeros_like(idx)
            for q in self.output_qubits:
                out = (out << 1) | ((idx >> (self.n_in - q)) & 1)
            object.__setattr__(self, "_outcome_of_basis", out)
        return self._outcome_of_basis


@dataclass(frozen=True)
class Prediction:
    """Computational-basis outcome probabilities (p00, p01, p10, p11)."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-10:
            raise NumericsError(f"invalid probability vector {p}")
        object.__setattr__(self, "probs", np.maximum(p, 0.0))


# ---------------------------------------------------------------------------
# Architecture construction


def _brick_pairs(active: Sequence[int]) -> Tuple[List[Tuple[int, int]], List[Tuple[int, int]]]:
    even = [(active[i], active[i + 1]) for i in range(0, len(active) - 1, 2)]
    odd = [(active[i], active[i + 1]) for i in range(1, len(active) - 1, 2)]
    return even, odd


def _full_conv_layer(active: Sequence[int], slot0: int) -> Tuple[List[Gate], LayerInfo]:
    gates: List[Gate] = []
    even, odd = _brick_pairs(active)
    pairs = even + odd
    s = slot0
    for a, b in pairs:
        gates.extend([
            Gate("rot", (a,), "Z", s + 0), Gate("rot", (a,), "Y", s + 1), Gate("rot", (a,), "Z", s + 2),
            Gate("rot", (b,), "Z", s + 3), Gate("rot", (b,), "Y", s + 4), Gate("rot", (b,), "Z", s + 5),
            Gate("rot", (a, b), "XX", s + 6), Gate("rot", (a, b), "YY", s + 7), Gate("rot", (a, b), "ZZ", s + 8),
            Gate("rot", (a,), "Z", s + 9), Gate("rot", (a,), "Y", s + 10), Gate("rot", (a,), "Z", s + 11),
            Gate("rot", (b,), "Z", s + 12), Gate("rot", (b,), "Y", s + 13), Gate("rot", (b,), "Z", s + 14),
        ])
    info = LayerInfo("conv", tuple(active), tuple(range(s, s + CONV_BLOCK_PARAMS)),
                     pairs=tuple(pairs))
    return gates, info


def _full_pool_layer(active: Sequence[int], slot0: int) -> Tuple[List[Gate], LayerInfo]:
    half = len(active) // 2
    kept, measured = tuple(active[:half]), tuple(active[half:])
    gates = [Gate("crot", (k,), "Y", slot0, control=d) for d, k in zip(measured, kept)]
    info = LayerInfo("pool", tuple(active), (slot0,), measured=measured, kept=kept)
    return gates, info


def _matchgate_conv_layer(active: Sequence[int], slot0: int) -> Tuple[List[Gate], LayerInfo]:
    gates: List[Gate] = []
    even, odd = _brick_pairs(active)
    for q in active:
        gates.append(Gate("rot", (q,), "Z", slot0, angle_factor=1.0))
    for a, b in even:
        gates.append(Gate("rot", (a, b), "XX", slot0 + 1, angle_factor=1.0))
    for a, b in odd:
        gates.append(Gate("rot", (a, b), "XX", slot0 + 2, angle_factor=1.0))
    info = LayerInfo("conv", tuple(active), tuple(range(slot0, slot0 + 3)),
                     pairs=tuple(even + odd))
    return gates, info


def _matchgate_pool_layer(active: Sequence[int], slot0: int) -> Tuple[List[Gate], LayerInfo]:
    half = len(active) // 2
    kept, measured = tuple(active[:half]), tuple(active[half:])
    gates: List[Gate] = []
    for a, b in zip(active[half - 1:-1], active[half:]):
        gates.append(Gate("rot", (a, b), "XX", slot0, angle_factor=1.0))
    for q in kept:
        gates.append(Gate("rot", (q,), "Z", slot0 + 1, angle_factor=1.0))
    info = LayerInfo("pool", tuple(active), (slot0, slot0 + 1), measured=measured, kept=kept)
    return gates, info


def build_qcnn(variant: str = "full", n_in: int = 8, n_out: int = 2) -> QcnnArchitecture:
    """Construct the alternating conv/pool architecture for either variant."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if n_in < n_out or (n_in & (n_in - 1)) or (n_out & (n_out - 1)):
        raise ConfigError("register sizes must be powers of two with n_in >= n_out")
    conv = _full_conv_layer if variant == "full" else _matchgate_conv_layer
    pool = _full_pool_layer if variant == "full" else _matchgate_pool_layer
    active = list(range(1, n_in + 1))
    gates: List[Gate] = []
    layers: List[LayerInfo] = []
    slot = 0
    while len(active) > n_out:
        g, info = conv(active, slot)
        gates.extend(g)
        layers.append(info)
        slot += len(info.param_slots)
        g, info = pool(active, slot)
        gates.extend(g)
        layers.append(info)
        slot += len(info.param_slots)
        active = list(info.kept)
    return QcnnArchitecture(
        variant=variant,
        n_in=n_in,
        n_out=n_out,
        output_qubits=tuple(active),
        gates=tuple(gates),
        layers=tuple(layers),
        total_params=slot,
    )


def init_params(arch: QcnnArchitecture, rng: np.random.Generator) -> np.ndarray:
    """Independent uniform angles on [-pi, pi)."""
    return rng.uniform(-np.pi, np.pi, size=arch.total_params)


# ---------------------------------------------------------------------------
# Forward evaluation


def _check_theta(arch: QcnnArchitecture, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (arch.total_params,):
        raise ConfigError(
            f"expected {arch.total_params} parameters, got shape {theta.shape}")
    return theta


def run_circuit(arch: QcnnArchitecture, theta: np.ndarray, amps: np.ndarray) -> np.ndarray:
    """Evolve amplitude rows (..., 2^n) through every gate."""
    theta = _check_theta(arch, theta)
    for cg in arch.compiled():
        amps = cg.apply(amps, theta[cg.slot])
    return amps


def batch_predict(arch: QcnnArchitecture, theta: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Outcome probabilities on the output qubits for stacked states (B, 2^n)."""
    final = run_circuit(arch, theta, states)
    return marginal_probs_batch(final, arch.n_in, arch.output_qubits)


def forward(arch: QcnnArchitecture, theta: np.ndarray, psi: StateVector) -> Prediction:
    if psi.n != arch.n_in:
        raise ConfigError(f"state has {psi.n} qubits, architecture expects {arch.n_in}")
    probs = batch_predict(arch, theta, psi.amplitudes[None, :])[0]
    return Prediction(probs)


# ---------------------------------------------------------------------------
# Loss, risk, gradients, accuracy


def _check_labels(labels: np.ndarray, m: int) -> np.ndarray:
    labels = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    if labels.shape[1] != m:
        raise ConfigError(f"labels have length {labels.shape[1]}, expected M={m}")
    return labels


def losses_from_probs(probs: np.ndarray, labels: np.ndarray, m: int) -> np.ndarray:
    """Squared-error loss over the first M outcomes, batched."""
    labels = _check_labels(labels, m)
    return np.sum((probs[:, :m] - labels) ** 2, axis=1)


def batch_losses(arch, theta, states: np.ndarray, labels: np.ndarray, m: int) -> np.ndarray:
    return losses_from_probs(batch_predict(arch, theta, states), labels, m)


def loss(arch, theta, example, m: int) -> float:
    """Mean-squared-error loss of one labeled example."""
    return float(batch_losses(arch, theta, example.state.amplitudes[None, :],
                              example.label[None, :], m)[0])


def risk(arch, theta, batch: Sequence, m: int) -> float:
    """Mean per-example loss over a non-empty batch."""
    if len(batch) == 0:
        raise ConfigError("risk of an empty batch is undefined")
    states = np.stack([ex.state.amplitudes for ex in batch])
    labels = np.stack([ex.label for ex in batch])
    return float(np.mean(batch_losses(arch, theta, states, labels, m)))


def per_example_gradients(arch, theta, states: np.ndarray, labels: np.ndarray,
                          m: int) -> np.ndarray:
    """Adjoint-mode d loss_i / d theta, shape (B, total_params); exact."""
    theta = _check_theta(arch, theta)
    labels = _check_labels(labels, m)
    states = np.atleast_2d(np.asarray(states, dtype=np.complex128))
    compiled = arch.compiled()
    psi = states
    for cg in compiled:
        psi = cg.apply(psi, theta[cg.slot])
    outcome = arch.outcome_of_basis()
    probs = marginal_probs_batch(psi, arch.n_in, arch.output_qubits)
    weights = np.zeros_like(probs)
    weights[:, :m] = 2.0 * (probs[:, :m] - labels)
    lam = weights[:, outcome] * psi
    grads = np.zeros((states.shape[0], arch.total_params))
    for cg in reversed(compiled):
        pauli_psi = cg.pauli_apply(psi)
        # d theta <- 2 Re <lambda| (-i factor P~) |psi_after>
        overlap = np.sum(np.conj(lam) * pauli_psi, axis=-1)
        grads[:, cg.slot] += 2.0 * cg.factor * overlap.imag
        psi = cg.apply(psi, theta[cg.slot], inverse=True, pauli_amps=pauli_psi)
        lam = cg.apply(lam, theta[cg.slot], inverse=True)
    return grads


def gradient(arch, theta, batch: Sequence, m: int) -> np.ndarray:
    """Gradient of the batch risk (mean loss); matches central finite differences."""
    if len(batch) == 0:
        raise ConfigError("gradient of an empty batch is undefined")
    states = np.stack([ex.state.amplitudes for ex in batch])
    labels = np.stack([ex.label for ex in batch])
    return per_example_gradients(arch, theta, states, labels, m).mean(axis=0)


def predictions_argmax(probs: np.ndarray, m: int) -> np.ndarray:
    """Predicted class per row: argmax over the first M outcomes, ties to lowest index."""
    return np.argmax(probs[:, :m], axis=1)


def accuracy(arch, theta, dataset, m: int) -> float:
    """Fraction of examples whose argmax outcome matches the phase index."""
    if len(dataset) == 0:
        raise ConfigError("accuracy of an empty dataset is undefined")
    probs = batch_predict(arch, theta, dataset.states_matrix())
    predicted = predictions_argmax(probs, m)
    return float(np.mean(predicted == dataset.phase_indices()))
