"""Scoring functions, pacing functions, and strategy presets.

A scoring function maps examples to [0, 1]; a pacing function maps the epoch
index to the fraction of the score-ordered dataset available to the learner.
Strategies bundle a scorer, an ordering, and a pacing function; the presets
reproduce the named strategies of the three experiment families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .models import Dataset

SCORER_KINDS = ("uniform", "random", "self_taught", "self_paced", "physics_pg")
PACING_KINDS = ("linear", "root_p", "geometric", "constant", "full")
ORDERINGS = ("ascending", "descending")


@dataclass(frozen=True)
class Scorer:
    """Scoring rule; ``direction`` is meaningful for the physics score only."""

    kind: str
    direction: str = "higher_first"   # which g-purity goes first under the preset

    def __post_init__(self):
        if self.kind not in SCORER_KINDS:
            raise ConfigError(f"unknown scorer kind {self.kind!r}")

    @property
    def dynamic(self) -> bool:
        """Dynamic scorers are re-evaluated every epoch; static ones are frozen."""
        return self.kind == "self_paced"


@dataclass(frozen=True)
class PacingFn:
    kind: str
    p0: float = 0.2
    t_sat: float = 1.0
    fraction: float = 0.2   # constant kind only

    def __post_init__(self):
        if self.kind not in PACING_KINDS:
            raise ConfigError(f"unknown pacing kind {self.kind!r}")
        if self.kind not in ("constant", "full") and not 0.0 < self.p0 <= 1.0:
            raise ConfigError(f"start fraction must lie in (0, 1], got {self.p0}")
        if self.kind == "constant" and not 0.0 < self.fraction <= 1.0:
            raise ConfigError(f"constant fraction must lie in (0, 1], got {self.fraction}")


@dataclass(frozen=True)
class Strategy:
    name: str
    scorer: Scorer
    ordering: str
    pacing: PacingFn

    def __post_init__(self):
        if self.ordering not in ORDERINGS:
            raise ConfigError(f"unknown ordering {self.ordering!r}")


@dataclass
class ScoreContext:
    """Everything a scorer might need; missing pieces raise at scoring time."""

    arch: object = None
    m: int = 0
    current_params: Optional[np.ndarray] = None
    reference_params: Optional[np.ndarray] = None
    basis: object = None
    rng: Optional[np.random.Generator] = None


def _minmax(raw: np.ndarray) -> np.ndarray:
    lo, hi = float(raw.min()), float(raw.max())
    if hi == lo:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)


def score_all(scorer: Scorer, dataset: Dataset, context: ScoreContext) -> np.ndarray:
    """Scores in [0,1]^N; loss- and random-based raw values are min-max normalized,
    the physics score is emitted verbatim (the Bessel bound already confines it)."""
    from . import dla, qcnn

    n = len(dataset)
    if scorer.kind == "uniform":
        scores = np.zeros(n)
    elif scorer.kind == "random":
        if context.rng is None:
            raise ConfigError("random scorer needs an rng in the context")
        scores = _minmax(context.rng.uniform(size=n))
    elif scorer.kind in ("self_taught", "self_paced"):
        params = (context.reference_params if scorer.kind == "self_taught"
                  else context.current_params)
        if params is None or context.arch is None or not context.m:
            raise ConfigError(f"{scorer.kind} scorer needs params, arch, and M")
        losses = qcnn.batch_losses(context.arch, params, dataset.states_matrix(),
                                   dataset.labels_matrix(), context.m)
        scores = _minmax(losses)
    elif scorer.kind == "physics_pg":
        if context.basis is None:
            raise ConfigError("physics scorer needs a Lie basis in the context")
        scores = dla.pg_scores_batch(dataset.states_matrix(), context.basis)
    else:  # pragma: no cover - guarded by Scorer validation
        raise ConfigError(f"unknown scorer kind {scorer.kind!r}")
    for ex, s in zip(dataset, scores):
        ex.score = float(s)
    return scores


def pace(fn: PacingFn, t: int, total_epochs: int) -> float:
    """Available fraction at epoch t (1-based)."""
    if not 1 <= t <= total_epochs:
        raise ConfigError(f"epoch {t} outside 1..{total_epochs}")
    if fn.kind == "full":
        return 1.0
    if fn.kind == "constant":
        return fn.fraction
    x = t / fn.t_sat
    if fn.kind == "linear":
        return min(1.0, fn.p0 + (1.0 - fn.p0) * x)
    if fn.kind == "root_p":
        return min(1.0, math.sqrt(fn.p0 ** 2 + (1.0 - fn.p0 ** 2) * x))
    # geometric: p0 * (1/p0)^x
    return min(1.0, fn.p0 * (1.0 / fn.p0) ** x)


def select_available(scores: np.ndarray, ordering: str, fraction: float,
                     minibatch: int) -> np.ndarray:
    """Prefix of the score-ordered index list; never smaller than a mini-batch.

    Ties are broken by the original dataset index so selection is total and
    deterministic.
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must lie in (0, 1], got {fraction}")
    if ordering not in ORDERINGS:
        raise ConfigError(f"unknown ordering {ordering!r}")
    n = len(scores)
    key = np.asarray(scores, dtype=np.float64)
    if ordering == "descending":
        key = -key
    order = np.lexsort((np.arange(n), key))
    count = max(math.ceil(fraction * n), min(minibatch, n))
    return order[:count]


def draw_minibatch(available: Sequence[int], minibatch: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Uniform sample without replacement; the whole set when it is smaller than L."""
    available = np.asarray(available)
    if available.size == 0:
        raise ConfigError("cannot draw a mini-batch from an empty availability set")
    k = min(minibatch, available.size)
    return rng.choice(available, size=k, replace=False)


def default_pacing(train_size: int, minibatch: int, epochs: int) -> PacingFn:
    """Linear pacing from one mini-batch worth of data, saturating at 0.8 T."""
    p0 = min(1.0, minibatch / train_size)
    return PacingFn("linear", p0=p0, t_sat=max(1.0, 0.8 * epochs))


PRESET_NAMES = ("standard", "random", "easy", "hard", "hardest", "higher_pg", "lower_pg")

FAMILY_STRATEGIES = {
    "self-taught": ("standard", "random", "easy", "hard"),
    "self-paced": ("standard", "easy", "hard", "hardest"),
    "physics": ("standard", "random", "higher_pg", "lower_pg"),
}


def preset(name: str, family: str = "self-taught", *, train_size: int = 50,
           minibatch: int = 10, epochs: int = 100) -> Strategy:
    """Fully configured strategy table row for one of the named presets.

    The loss-based scorer behind Easy/Hard is the pre-trained reference model
    in the self-taught family and the current model in the self-paced family.
    """
    name = name.lower().replace("-", "_")
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown strategy {name!r}; expected one of {PRESET_NAMES}")
    loss_kind = "self_paced" if family == "self-paced" else "self_taught"
    pacing = default_pacing(train_size, minibatch, epochs)
    if name == "standard":
        return Strategy("standard", Scorer("uniform"), "ascending", PacingFn("full"))
    if name == "random":
        return Strategy("random", Scorer("random"), "ascending", pacing)
    if name == "easy":
        return Strategy("easy", Scorer(loss_kind), "ascending", pacing)
    if name == "hard":
        return Strategy("hard", Scorer(loss_kind), "descending", pacing)
    if name == "hardest":
        fraction = min(1.0, minibatch / train_size)
        return Strategy("hardest", Scorer("self_paced"), "descending",
                        PacingFn("constant", fraction=fraction))
    if name == "higher_pg":
        # higher purity first = lower score (Eq.-style s = 1 - purity) first
        return Strategy("higher_pg", Scorer("physics_pg", "higher_first"), "ascending", pacing)
    return Strategy("lower_pg", Scorer("physics_pg", "lower_first"), "descending", pacing)
