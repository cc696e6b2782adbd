"""Experiment configuration: a single INI file enumerating every default.

The config file is the unit of reproducibility: every output artifact embeds
a hash of the fully-resolved key/value map, so artifacts from different
configurations cannot be mixed silently.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .curriculum import FAMILY_STRATEGIES, PRESET_NAMES
from .errors import ConfigError
from .models import ModelSpec
from .persist import mapping_hash

EXPERIMENT_FAMILIES = ("self-taught", "self-paced", "physics")

DEFAULT_CONFIG = """\
[experiment]
name = selfpaced-cluster
family = self-paced
model = cluster
strategies = standard,easy,hard,hardest
runs = 10

[model]
n = 8
j1_low = -4.0
j1_high = 4.0
j2_low = -4.0
j2_high = 4.0
ratio_low = 0.0
ratio_high = 3.0
delta = 3.0
periodic = true
boundary_table =

[data]
train_size = 50
test_size = 1000
dataset_seed = 7
balanced = true

[training]
variant = full
epochs = 100
steps_per_epoch = 5
minibatch = 10
learning_rate = 0.02
seed = 1234
self_taught_reference = final

[adam]
beta1 = 0.9
beta2 = 0.999
epsilon = 1e-8

[curriculum]
pacing = linear
start_fraction =
saturation_fraction = 0.8

[scan]
fixed = j1=1.0
sweep = j2
low = -3.0
high = 3.0
points = 121

[verify]
param_samples = 100
bins = 10
fractions = 0.2,0.5,1.0
prop2_seeds = 50
prop2_epochs = 50

[output]
out_dir = runs
cache_dir = cache
jobs = 1
"""


@dataclass(frozen=True)
class CutSpec:
    """A one-dimensional cut through the phase diagram."""

    family: str
    fixed: Dict[str, float]
    sweep: str
    low: float
    high: float
    points: int

    def __post_init__(self):
        if self.points < 2:
            raise ConfigError("a cut needs at least 2 points")
        if not self.low < self.high:
            raise ConfigError(f"empty sweep range [{self.low}, {self.high}]")

    def values(self) -> List[float]:
        step = (self.high - self.low) / (self.points - 1)
        return [self.low + i * step for i in range(self.points)]


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    family: str
    model: ModelSpec
    strategies: Tuple[str, ...]
    runs: int
    train_size: int
    test_size: int
    dataset_seed: int
    balanced: bool
    variant: str
    epochs: int
    steps_per_epoch: int
    minibatch: int
    learning_rate: float
    seed: int
    self_taught_reference: str
    beta1: float
    beta2: float
    epsilon: float
    pacing: str
    start_fraction: Optional[float]
    saturation_fraction: float
    cut: CutSpec
    param_samples: int
    bins: int
    fractions: Tuple[float, ...]
    prop2_seeds: int
    prop2_epochs: int
    out_dir: str
    cache_dir: str
    jobs: int
    raw: Dict[str, Dict[str, str]] = field(default_factory=dict, repr=False, compare=False)

    def config_hash(self) -> str:
        """Digest of everything that affects results; where outputs land and
        how many workers run do not change the science, so [output] is excluded."""
        return mapping_hash({k: v for k, v in self.raw.items() if k != "output"})

    def validate(self) -> None:
        if self.family not in EXPERIMENT_FAMILIES:
            raise ConfigError(f"unknown experiment family {self.family!r}")
        allowed = FAMILY_STRATEGIES[self.family]
        for s in self.strategies:
            if s not in PRESET_NAMES:
                raise ConfigError(f"unknown strategy {s!r}")
            if s not in allowed:
                raise ConfigError(
                    f"strategy {s!r} is not part of the {self.family} family "
                    f"(expected a subset of {allowed})")
        if self.family == "physics" and self.variant != "matchgate":
            raise ConfigError(
                "the physics family scores by the circuit's Lie algebra and "
                "requires variant = matchgate")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")


def _model_from_sections(cp: configparser.ConfigParser) -> ModelSpec:
    family = cp.get("experiment", "model")
    sec = cp["model"]
    n = sec.getint("n")
    table = sec.get("boundary_table", "").strip() or None
    if family == "cluster":
        return ModelSpec.cluster(
            n=n,
            j1_range=(sec.getfloat("j1_low"), sec.getfloat("j1_high")),
            j2_range=(sec.getfloat("j2_low"), sec.getfloat("j2_high")),
            boundary_table=table,
            periodic=sec.getboolean("periodic", True),
        )
    if family == "xxz":
        return ModelSpec.xxz(
            n=n,
            ratio_range=(sec.getfloat("ratio_low"), sec.getfloat("ratio_high")),
            delta=sec.getfloat("delta"),
            boundary_table=table,
        )
    raise ConfigError(f"unknown model {family!r}")


def _parse(cp: configparser.ConfigParser) -> ExperimentConfig:
    try:
        model = _model_from_sections(cp)
        scan_fixed = {}
        for part in cp.get("scan", "fixed", fallback="").split(","):
            part = part.strip()
            if part:
                key, _, val = part.partition("=")
                scan_fixed[key.strip()] = float(val)
        start_fraction = cp.get("curriculum", "start_fraction", fallback="").strip()
        cfg = ExperimentConfig(
            name=cp.get("experiment", "name"),
            family=cp.get("experiment", "family"),
            model=model,
            strategies=tuple(
                s.strip().lower() for s in cp.get("experiment", "strategies").split(",") if s.strip()),
            runs=cp.getint("experiment", "runs"),
            train_size=cp.getint("data", "train_size"),
            test_size=cp.getint("data", "test_size"),
            dataset_seed=cp.getint("data", "dataset_seed"),
            balanced=cp.getboolean("data", "balanced"),
            variant=cp.get("training", "variant"),
            epochs=cp.getint("training", "epochs"),
            steps_per_epoch=cp.getint("training", "steps_per_epoch"),
            minibatch=cp.getint("training", "minibatch"),
            learning_rate=cp.getfloat("training", "learning_rate"),
            seed=cp.getint("training", "seed"),
            self_taught_reference=cp.get("training", "self_taught_reference"),
            beta1=cp.getfloat("adam", "beta1"),
            beta2=cp.getfloat("adam", "beta2"),
            epsilon=cp.getfloat("adam", "epsilon"),
            pacing=cp.get("curriculum", "pacing"),
            start_fraction=float(start_fraction) if start_fraction else None,
            saturation_fraction=cp.getfloat("curriculum", "saturation_fraction"),
            cut=CutSpec(
                family=cp.get("experiment", "model"),
                fixed=scan_fixed,
                sweep=cp.get("scan", "sweep"),
                low=cp.getfloat("scan", "low"),
                high=cp.getfloat("scan", "high"),
                points=cp.getint("scan", "points"),
            ),
            param_samples=cp.getint("verify", "param_samples"),
            bins=cp.getint("verify", "bins"),
            fractions=tuple(
                float(x) for x in cp.get("verify", "fractions").split(",") if x.strip()),
            prop2_seeds=cp.getint("verify", "prop2_seeds"),
            prop2_epochs=cp.getint("verify", "prop2_epochs"),
            out_dir=cp.get("output", "out_dir"),
            cache_dir=cp.get("output", "cache_dir"),
            jobs=cp.getint("output", "jobs"),
            raw={s: dict(cp[s]) for s in cp.sections()},
        )
    except (configparser.Error, ValueError) as exc:
        raise ConfigError(f"bad config: {exc}") from exc
    cfg.validate()
    return cfg


def load_config(path: Optional[str | Path] = None,
                overrides: Optional[Dict[str, str]] = None) -> ExperimentConfig:
    """Parse an experiment config; ``overrides`` maps 'section.key' to values.

    Unset keys fall back to the built-in defaults, so a partial file is fine
    and the resolved mapping is always fully enumerated.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string(DEFAULT_CONFIG)
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            with open(path, "r", encoding="utf-8") as fh:
                cp.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if not cp.has_section(section):
            raise ConfigError(f"unknown config section {section!r}")
        cp.set(section, key, str(value))
    return _parse(cp)


def default_config_text() -> str:
    return DEFAULT_CONFIG
