"""qpace: curriculum-paced training of quantum-convolutional phase classifiers.

The package is organized around eight layers:

* :mod:`qpace.paulis` / :mod:`qpace.states` - sparse Pauli algebra,
  statevectors, exact diagonalization, marginals;
* :mod:`qpace.models` - spin-chain Hamiltonians, phase labels, datasets;
* :mod:`qpace.qcnn` - the 8-to-2 qubit convolutional circuit model with
  analytic gradients (full and matchgate variants);
* :mod:`qpace.dla` - dynamical Lie algebra closure, g-purity, and the
  physics-inspired score;
* :mod:`qpace.curriculum` - scoring functions, pacing functions, presets;
* :mod:`qpace.training` - ADAM loop with curriculum-gated mini-batches;
* :mod:`qpace.verify` - empirical checks of the two propositions;
* :mod:`qpace.cli` - the reproducible experiment driver.
"""

__version__ = "0.1.0"

from .paulis import OperatorSum, PauliTerm
from .states import StateVector, dense_matrix, expectation, ground_state, marginal_probs, pauli_apply
from .models import Dataset, LabeledExample, ModelSpec, build_cluster, build_xxz, generate_dataset, label_cluster, label_xxz

__all__ = [
    "OperatorSum",
    "PauliTerm",
    "StateVector",
    "dense_matrix",
    "expectation",
    "ground_state",
    "marginal_probs",
    "pauli_apply",
    "Dataset",
    "LabeledExample",
    "ModelSpec",
    "build_cluster",
    "build_xxz",
    "generate_dataset",
    "label_cluster",
    "label_xxz",
]
