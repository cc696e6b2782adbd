"""Spin-chain Hamiltonian families, phase labels, and dataset generation.

Two models are supported:

* ``cluster`` - the generalized cluster chain
  ``sum_j (Z_j - j1 X_j X_{j+1} - j2 X_{j-1} Z_j X_{j+1})`` with periodic
  index arithmetic by default (the sum runs over all n sites) and an
  open-boundary toggle; four phases.
* ``xxz`` - the bond-alternating XXZ chain with odd-bond coupling ``j1``,
  even-bond coupling ``j2``, anisotropy ``delta``, open boundary; three
  phases, parameterized by the ratio ``j1/j2``.

Phase labels come from piecewise-linear boundary tables shipped as JSON data
files, so the boundaries stay auditable and swappable without code changes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import ConfigError, NumericsError
from .paulis import OperatorSum, PauliTerm
from .states import StateVector, ground_state_with_gap

CLUSTER_PHASES = ("spt", "ferromagnetic", "antiferromagnetic", "trivial")
XXZ_PHASES = ("trivial", "antiferromagnetic", "topological")

DEGENERACY_GAP = 1e-8
_RESAMPLE_CAP_FACTOR = 2000


# ---------------------------------------------------------------------------
# Hamiltonians


def build_cluster(n: int, j1: float, j2: float, periodic: bool = True) -> OperatorSum:
    """Generalized cluster Hamiltonian; term count n + n*[j1!=0] + n*[j2!=0] when periodic."""
    if n < 3:
        raise ConfigError(f"cluster model needs n >= 3, got {n}")
    op = OperatorSum.zero(n)
    for j in range(1, n + 1):
        op.add_term(PauliTerm.from_sites(n, {j: "Z"}, 1.0))
        right = j % n + 1
        left = (j - 2) % n + 1
        if j1 != 0.0 and (periodic or j < n):
            op.add_term(PauliTerm.from_sites(n, {j: "X", right: "X"}, -j1))
        if j2 != 0.0 and (periodic or 1 < j < n):
            op.add_term(PauliTerm.from_sites(n, {left: "X", j: "Z", right: "X"}, -j2))
    return op


def build_xxz(n: int, j1: float, j2: float, delta: float) -> OperatorSum:
    """Bond-alternating XXZ Hamiltonian, open boundary; n must be even."""
    if n % 2 != 0 or n < 4:
        raise ConfigError(f"XXZ model needs even n >= 4, got {n}")
    op = OperatorSum.zero(n)

    def bond(a: int, b: int, coupling: float) -> None:
        for letter in ("X", "Y"):
            op.add_term(PauliTerm.from_sites(n, {a: letter, b: letter}, coupling))
        op.add_term(PauliTerm.from_sites(n, {a: "Z", b: "Z"}, coupling * delta))

    for j in range(1, n // 2 + 1):
        if j1 != 0.0:
            bond(2 * j - 1, 2 * j, j1)
    for j in range(1, n // 2):
        if j2 != 0.0:
            bond(2 * j, 2 * j + 1, j2)
    return op


# ---------------------------------------------------------------------------
# Phase labels from boundary tables


class BoundaryTable:
    """Piecewise region table: each phase is a union of half-plane intersections.

    Evaluated in ascending phase_index order with closed inequalities, so a
    point on a shared boundary resolves to the lower phase index.
    """

    def __init__(self, spec: dict):
        self.coords: List[str] = list(spec["coords"])
        self.phases = sorted(spec["phases"], key=lambda p: p["index"])
        indices = [p["index"] for p in self.phases]
        if indices != list(range(len(indices))):
            raise ConfigError(f"boundary table indices {indices} are not 0..M-1")

    @classmethod
    def from_file(cls, path: str | Path) -> "BoundaryTable":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    @classmethod
    def default(cls, family: str) -> "BoundaryTable":
        name = {"cluster": "cluster_phases.json", "xxz": "xxz_phases.json"}.get(family)
        if name is None:
            raise ConfigError(f"unknown model family {family!r}")
        text = resources.files("qpace.data").joinpath(name).read_text(encoding="utf-8")
        return cls(json.loads(text))

    def label(self, point: Dict[str, float]) -> int:
        x, y = (float(point[c]) for c in self.coords)
        for phase in self.phases:
            for region in phase["regions"]:
                ok = True
                for a, b, c, opname in region:
                    v = a * x + b * y + c
                    if opname == "ge":
                        ok = v >= 0.0
                    elif opname == "le":
                        ok = v <= 0.0
                    else:
                        raise ConfigError(f"unknown inequality op {opname!r}")
                    if not ok:
                        break
                if ok:
                    return phase["index"]
        raise ConfigError(f"boundary table does not cover point {point}")


_DEFAULT_TABLES: Dict[str, BoundaryTable] = {}


def _table(family: str, table: Optional[BoundaryTable]) -> BoundaryTable:
    if table is not None:
        return table
    if family not in _DEFAULT_TABLES:
        _DEFAULT_TABLES[family] = BoundaryTable.default(family)
    return _DEFAULT_TABLES[family]


def label_cluster(j1: float, j2: float, table: Optional[BoundaryTable] = None) -> int:
    """Phase index in {0: SPT, 1: FM, 2: AFM, 3: trivial}."""
    return _table("cluster", table).label({"j1": j1, "j2": j2})


def label_xxz(ratio: float, delta: float, table: Optional[BoundaryTable] = None) -> int:
    """Phase index in {0: trivial, 1: AFM, 2: topological}; ratio = j1/j2 > 0."""
    if ratio <= 0.0:
        raise ConfigError(f"XXZ coupling ratio must be positive, got {ratio}")
    return _table("xxz", table).label({"ratio": ratio, "delta": delta})


# ---------------------------------------------------------------------------
# Model specification and datasets


@dataclass(frozen=True)
class ModelSpec:
    """Hamiltonian family plus the sampling ranges for its couplings."""

    family: str
    n: int
    ranges: Dict[str, tuple]
    fixed: Dict[str, float] = field(default_factory=dict)
    boundary_table: Optional[str] = None
    periodic: bool = True  # cluster only

    def __post_init__(self):
        if self.family not in ("cluster", "xxz"):
            raise ConfigError(f"unknown model family {self.family!r}")
        if self.family == "cluster" and self.n < 3:
            raise ConfigError("cluster model needs n >= 3")
        if self.family == "xxz" and (self.n % 2 != 0 or self.n < 4):
            raise ConfigError("XXZ model needs even n >= 4")
        for name, (lo, hi) in self.ranges.items():
            if not lo < hi:
                raise ConfigError(f"degenerate range for {name}: [{lo}, {hi}]")

    @classmethod
    def cluster(cls, n: int = 8, j1_range=(-4.0, 4.0), j2_range=(-4.0, 4.0),
                boundary_table: Optional[str] = None, periodic: bool = True) -> "ModelSpec":
        return cls("cluster", n, {"j1": tuple(j1_range), "j2": tuple(j2_range)},
                   {}, boundary_table, periodic)

    @classmethod
    def xxz(cls, n: int = 8, ratio_range=(0.0, 3.0), delta: float = 3.0,
            boundary_table: Optional[str] = None) -> "ModelSpec":
        return cls("xxz", n, {"ratio": tuple(ratio_range)}, {"delta": float(delta)},
                   boundary_table)

    @property
    def num_classes(self) -> int:
        return 4 if self.family == "cluster" else 3

    @property
    def phase_names(self) -> tuple:
        return CLUSTER_PHASES if self.family == "cluster" else XXZ_PHASES

    def table(self) -> BoundaryTable:
        if self.boundary_table:
            return BoundaryTable.from_file(self.boundary_table)
        return _table(self.family, None)

    def hamiltonian(self, couplings: Dict[str, float]) -> OperatorSum:
        if self.family == "cluster":
            return build_cluster(self.n, couplings["j1"], couplings["j2"],
                                 periodic=self.periodic)
        return build_xxz(self.n, j1=couplings["ratio"], j2=1.0,
                         delta=couplings["delta"])

    def label(self, couplings: Dict[str, float], table: Optional[BoundaryTable] = None) -> int:
        table = table if table is not None else self.table()
        if self.family == "cluster":
            return label_cluster(couplings["j1"], couplings["j2"], table)
        return label_xxz(couplings["ratio"], couplings["delta"], table)


@dataclass
class LabeledExample:
    """One (ground state, one-hot label) training atom."""

    state: StateVector
    label: np.ndarray
    couplings: Dict[str, float]
    phase_index: int
    score: Optional[float] = None
    degenerate: bool = False

    def __post_init__(self):
        label = np.asarray(self.label, dtype=np.float64)
        hot = np.flatnonzero(label == 1.0)
        if len(hot) != 1 or abs(label.sum() - 1.0) > 0:
            raise ConfigError("label must be one-hot")
        if hot[0] != self.phase_index:
            raise ConfigError("label index disagrees with phase_index")
        self.label = label


def one_hot(index: int, m: int) -> np.ndarray:
    v = np.zeros(m, dtype=np.float64)
    v[index] = 1.0
    return v


@dataclass
class Dataset:
    examples: List[LabeledExample]
    model: ModelSpec
    seed: int
    role: str = "train"
    _states: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def __getitem__(self, i: int) -> LabeledExample:
        return self.examples[i]

    def states_matrix(self) -> np.ndarray:
        """All amplitudes stacked as (N, 2^n); cached."""
        if self._states is None:
            self._states = np.stack([ex.state.amplitudes for ex in self.examples])
        return self._states

    def labels_matrix(self) -> np.ndarray:
        return np.stack([ex.label for ex in self.examples])

    def phase_indices(self) -> np.ndarray:
        return np.array([ex.phase_index for ex in self.examples], dtype=np.int64)

    def class_counts(self) -> np.ndarray:
        counts = np.zeros(self.model.num_classes, dtype=np.int64)
        for ex in self.examples:
            counts[ex.phase_index] += 1
        return counts

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset([self.examples[i] for i in indices], self.model, self.seed, self.role)


def _sample_couplings(spec: ModelSpec, rng: np.random.Generator) -> Dict[str, float]:
    couplings = dict(spec.fixed)
    for name in sorted(spec.ranges):
        lo, hi = spec.ranges[name]
        v = float(rng.uniform(lo, hi))
        if spec.family == "xxz" and name == "ratio":
            while v <= 0.0:
                v = float(rng.uniform(lo, hi))
        couplings[name] = v
    return couplings


def sample_labeled_couplings(spec: ModelSpec, count: int, seed: int,
                             balanced: bool = True) -> List[Dict]:
    """Draw coupling records with phase labels, enforcing class quotas when balanced.

    Each attempt uses its own spawned substream, so the accepted sequence is a
    pure function of (spec, count, seed) no matter how the expensive state
    computations are later parallelized.
    """
    m = spec.num_classes
    if balanced and count < m:
        raise ConfigError(f"balanced generation needs count >= {m}")
    table = spec.table()
    quota_low = count // m
    extras_allowed = count - m * quota_low
    counts = np.zeros(m, dtype=np.int64)
    extra_granted: set = set()
    records: List[Dict] = []
    attempt = 0
    cap = _RESAMPLE_CAP_FACTOR * count
    while len(records) < count:
        if attempt >= cap:
            raise ConfigError(
                f"class quotas unreachable after {cap} samples; class counts so far "
                f"{counts.tolist()} - check the sampling ranges against the boundary table")
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(attempt,)))
        attempt += 1
        couplings = _sample_couplings(spec, rng)
        phase = spec.label(couplings, table)
        if balanced:
            allowance = quota_low + (1 if phase in extra_granted else 0)
            if counts[phase] >= allowance:
                if counts[phase] == quota_low and len(extra_granted) < extras_allowed:
                    extra_granted.add(phase)
                else:
                    continue
        counts[phase] += 1
        records.append({"couplings": couplings, "phase_index": int(phase)})
    return records


def generate_dataset(spec: ModelSpec, count: int, seed: int,
                     balanced: bool = True, role: str = "train") -> Dataset:
    """Sample couplings, diagonalize, and assemble a labeled ground-state dataset."""
    records = sample_labeled_couplings(spec, count, seed, balanced=balanced)
    m = spec.num_classes
    examples = []
    for rec in records:
        h = spec.hamiltonian(rec["couplings"])
        _, psi, gap = ground_state_with_gap(h)
        examples.append(LabeledExample(
            state=psi,
            label=one_hot(rec["phase_index"], m),
            couplings=rec["couplings"],
            phase_index=rec["phase_index"],
            degenerate=bool(gap < DEGENERACY_GAP),
        ))
    return Dataset(examples, spec, seed, role)


# ---------------------------------------------------------------------------
# Persistence: binary amplitudes (.npy) + structured-text manifest (.json)

DATASET_FORMAT_VERSION = 1


def save_dataset(ds: Dataset, prefix: str | Path) -> None:
    """Write <prefix>.npy (amplitudes) and <prefix>.json (manifest)."""
    from .persist import atomic_write_bytes, atomic_write_text
    import io

    prefix = Path(prefix)
    buf = io.BytesIO()
    np.save(buf, ds.states_matrix())
    atomic_write_bytes(prefix.with_suffix(".npy"), buf.getvalue())
    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "family": ds.model.family,
        "n": ds.model.n,
        "ranges": {k: list(v) for k, v in ds.model.ranges.items()},
        "fixed": dict(ds.model.fixed),
        "periodic": ds.model.periodic,
        "seed": ds.seed,
        "role": ds.role,
        "count": len(ds),
        "class_counts": ds.class_counts().tolist(),
        "couplings": [ex.couplings for ex in ds.examples],
        "phase_index": [ex.phase_index for ex in ds.examples],
        "degenerate": [ex.degenerate for ex in ds.examples],
    }
    atomic_write_text(prefix.with_suffix(".json"), json.dumps(manifest, indent=1))


def load_dataset(prefix: str | Path) -> Dataset:
    from .errors import ArtifactError

    prefix = Path(prefix)
    manifest_path = prefix.with_suffix(".json")
    npy_path = prefix.with_suffix(".npy")
    if not manifest_path.exists() or not npy_path.exists():
        raise ArtifactError(f"dataset files missing at {prefix}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != DATASET_FORMAT_VERSION:
        raise ArtifactError(
            f"dataset format version {manifest.get('format_version')} is not "
            f"{DATASET_FORMAT_VERSION}")
    states = np.load(npy_path)
    if states.shape[0] != manifest["count"]:
        raise ArtifactError("amplitude file row count disagrees with manifest")
    spec = ModelSpec(
        family=manifest["family"],
        n=manifest["n"],
        ranges={k: tuple(v) for k, v in manifest["ranges"].items()},
        fixed=manifest["fixed"],
        periodic=manifest.get("periodic", True),
    )
    m = spec.num_classes
    examples = []
    for i in range(manifest["count"]):
        examples.append(LabeledExample(
            state=StateVector(states[i], spec.n),
            label=one_hot(manifest["phase_index"][i], m),
            couplings=manifest["couplings"][i],
            phase_index=manifest["phase_index"][i],
            degenerate=manifest["degenerate"][i],
        ))
    return Dataset(examples, spec, manifest["seed"], manifest["role"])
