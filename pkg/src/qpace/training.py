"""ADAM training loop with curriculum-gated mini-batches.

A run is a pure function of its configuration: datasets, parameter
initialization, scoring, and mini-batch draws all derive from explicit seed
streams, so identical configs produce bit-identical metrics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import qcnn
from .curriculum import ScoreContext, Strategy, draw_minibatch, pace, preset, score_all, select_available
from .errors import ConfigError, NumericsError
from .models import Dataset, ModelSpec, generate_dataset
from .persist import atomic_write_bytes


@dataclass(frozen=True)
class TrainConfig:
    model: ModelSpec
    strategy: Strategy
    train_size: int = 50
    test_size: int = 1000
    train_dataset_seed: int = 11
    test_dataset_seed: int = 12
    run_seed: int = 0
    epochs: int = 100
    steps_per_epoch: int = 5
    minibatch: int = 10
    learning_rate: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    variant: str = "full"
    self_taught_reference: str = "final"   # "final" | "best"

    def __post_init__(self):
        if self.epochs < 1 or self.steps_per_epoch < 1 or self.minibatch < 1:
            raise ConfigError("epochs, steps_per_epoch, and minibatch must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.self_taught_reference not in ("final", "best"):
            raise ConfigError("self_taught_reference must be 'final' or 'best'")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int
    learning_rate: float
    beta1: float
    beta2: float
    epsilon: float

    @classmethod
    def fresh(cls, size: int, learning_rate: float, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0, learning_rate, beta1, beta2, epsilon)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray):
    """One bias-corrected ADAM update; returns (new state, new params)."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ConfigError("parameter/gradient/state length mismatch")
    if not np.all(np.isfinite(grads)):
        raise NumericsError("non-finite gradient entries")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads ** 2
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = replace(state, m=m, v=v, step=t)
    return new_state, new_params


@dataclass
class EpochMetrics:
    epoch: int
    train_accuracy: float
    test_accuracy: float
    train_risk: float
    available_size: int
    minibatches: List[List[int]]
    scores: np.ndarray


@dataclass
class RunMetrics:
    strategy: str
    run_seed: int
    epochs: List[EpochMetrics]
    best_train_accuracy: float
    best_train_epoch: int
    best_test_accuracy: float
    best_test_epoch: int
    final_params: np.ndarray
    params_at_best_test: np.ndarray

    def curve(self, name: str) -> np.ndarray:
        return np.array([getattr(e, name) for e in self.epochs])


def _rng_state(gen: np.random.Generator) -> dict:
    return gen.bit_generator.state


def _restore_rng(state: dict) -> np.random.Generator:
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)


def _spawned_rngs(seed: int, count: int) -> List[np.random.Generator]:
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(c) for c in ss.spawn(count)]


def reference_run_seed(run_seed: int) -> int:
    """Independent, recorded seed for the self-taught reference model."""
    return int(np.random.SeedSequence(entropy=run_seed, spawn_key=(97,)).generate_state(1)[0])


def train_reference_model(config: TrainConfig, train_ds: Dataset, test_ds: Dataset,
                          epochs: int | None = None) -> np.ndarray:
    """Standard-protocol reference model used by the self-taught scorer."""
    ref_strategy = preset("standard", train_size=config.train_size,
                          minibatch=config.minibatch, epochs=config.epochs)
    ref_config = replace(config, strategy=ref_strategy,
                         run_seed=reference_run_seed(config.run_seed),
                         epochs=epochs or config.epochs)
    metrics = train_run(ref_config, train_ds=train_ds, test_ds=test_ds)
    if config.self_taught_reference == "best":
        return metrics.params_at_best_test
    return metrics.final_params


def _checkpoint_payload(epoch, theta, adam, batch_rng, score_rng, scores, best):
    return dict(
        epoch=np.int64(epoch),
        theta=theta,
        adam_m=adam.m,
        adam_v=adam.v,
        adam_step=np.int64(adam.step),
        scores=scores if scores is not None else np.array([]),
        best=np.array(best),
        batch_rng=json.dumps(_rng_state(batch_rng)),
        score_rng=json.dumps(_rng_state(score_rng)),
    )


def save_checkpoint(path: str | Path, payload: dict) -> None:
    import io

    buf = io.BytesIO()
    np.savez(buf, **payload)
    atomic_write_bytes(path, buf.getvalue())


def load_checkpoint(path: str | Path) -> dict:
    with np.load(path, allow_pickle=False) as data:
        return {k: data[k] for k in data.files}


def train_run(config: TrainConfig,
              train_ds: Optional[Dataset] = None,
              test_ds: Optional[Dataset] = None,
              reference_params: Optional[np.ndarray] = None,
              basis=None,
              checkpoint_path: Optional[str | Path] = None,
              epoch_callback=None) -> RunMetrics:
    """Execute one seeded training run and collect per-epoch metrics.

    Scores are (re)computed at epoch 1 and, for dynamic scorers, every epoch;
    each epoch then selects the available subset via the pacing function and
    performs ``steps_per_epoch`` mini-batch ADAM updates.  ``epoch_callback``
    receives each EpochMetrics as it is produced (for streaming consumers).
    """
    model = config.model
    if train_ds is None:
        train_ds = generate_dataset(model, config.train_size, config.train_dataset_seed,
                                    role="train")
    if test_ds is None:
        test_ds = generate_dataset(model, config.test_size, config.test_dataset_seed,
                                   role="test")
    arch = qcnn.build_qcnn(config.variant)
    if model.n != arch.n_in:
        raise ConfigError(f"model has n={model.n} but the circuit expects {arch.n_in}")
    m = model.num_classes
    strategy = config.strategy
    scorer = strategy.scorer

    init_rng, batch_rng, score_rng = _spawned_rngs(config.run_seed, 3)
    theta = qcnn.init_params(arch, init_rng)
    adam = AdamState.fresh(arch.total_params, config.learning_rate,
                           config.beta1, config.beta2, config.epsilon)

    if scorer.kind == "self_taught" and reference_params is None:
        reference_params = train_reference_model(config, train_ds, test_ds)
    if scorer.kind == "physics_pg" and basis is None:
        from .dla import lie_closure, matchgate_generators
        basis = lie_closure(matchgate_generators(model.n))

    train_states = train_ds.states_matrix()
    train_labels = train_ds.labels_matrix()

    scores: Optional[np.ndarray] = None
    start_epoch = 0
    best_train, best_train_ep = -1.0, 0
    best_test, best_test_ep = -1.0, 0
    theta_best = theta.copy()

    if checkpoint_path is not None and Path(checkpoint_path).exists():
        ck = load_checkpoint(checkpoint_path)
        start_epoch = int(ck["epoch"])
        theta = ck["theta"]
        adam = replace(adam, m=ck["adam_m"], v=ck["adam_v"], step=int(ck["adam_step"]))
        scores = ck["scores"] if ck["scores"].size else None
        best_train, best_train_ep, best_test, best_test_ep = ck["best"].tolist()
        best_train_ep, best_test_ep = int(best_train_ep), int(best_test_ep)
        batch_rng = _restore_rng(json.loads(str(ck["batch_rng"])))
        score_rng = _restore_rng(json.loads(str(ck["score_rng"])))

    epoch_metrics: List[EpochMetrics] = []
    for t in range(start_epoch + 1, config.epochs + 1):
        if scores is None or scorer.dynamic:
            ctx = ScoreContext(arch=arch, m=m, current_params=theta,
                               reference_params=reference_params, basis=basis,
                               rng=score_rng)
            scores = score_all(scorer, train_ds, ctx)
        fraction = pace(strategy.pacing, t, config.epochs)
        available = select_available(scores, strategy.ordering, fraction, config.minibatch)
        batches: List[List[int]] = []
        for _ in range(config.steps_per_epoch):
            idx = draw_minibatch(available, config.minibatch, batch_rng)
            batches.append([int(i) for i in idx])
            grads = qcnn.per_example_gradients(
                arch, theta, train_states[idx], train_labels[idx], m).mean(axis=0)
            adam, theta = adam_step(adam, theta, grads)
        train_probs = qcnn.batch_predict(arch, theta, train_states)
        train_losses = qcnn.losses_from_probs(train_probs, train_labels, m)
        train_risk = float(train_losses.mean())
        train_acc = float(np.mean(
            qcnn.predictions_argmax(train_probs, m) == train_ds.phase_indices()))
        test_acc = qcnn.accuracy(arch, theta, test_ds, m)
        if not (np.isfinite(train_risk) and np.all(np.isfinite(theta))):
            raise NumericsError(
                f"non-finite training state at epoch {t} (risk={train_risk}); "
                f"strategy={strategy.name}, seed={config.run_seed}")
        if train_acc > best_train:
            best_train, best_train_ep = train_acc, t
        if test_acc > best_test:
            best_test, best_test_ep = test_acc, t
            theta_best = theta.copy()
        record = EpochMetrics(
            epoch=t, train_accuracy=train_acc, test_accuracy=test_acc,
            train_risk=train_risk, available_size=int(len(available)),
            minibatches=batches, scores=np.asarray(scores).copy())
        epoch_metrics.append(record)
        if epoch_callback is not None:
            epoch_callback(record)
        if checkpoint_path is not None:
            frozen = None if scorer.dynamic else scores
            save_checkpoint(checkpoint_path, _checkpoint_payload(
                t, theta, adam, batch_rng, score_rng, frozen,
                (best_train, best_train_ep, best_test, best_test_ep)))

    return RunMetrics(
        strategy=strategy.name,
        run_seed=config.run_seed,
        epochs=epoch_metrics,
        best_train_accuracy=best_train,
        best_train_epoch=best_train_ep,
        best_test_accuracy=best_test,
        best_test_epoch=best_test_ep,
        final_params=theta,
        params_at_best_test=theta_best,
    )


@dataclass
class AggregateResult:
    epochs: np.ndarray
    mean_test_accuracy: np.ndarray
    sem_test_accuracy: np.ndarray
    mean_train_accuracy: np.ndarray
    sem_train_accuracy: np.ndarray
    mean_train_risk: np.ndarray
    mean_best_train_accuracy: float
    mean_best_test_accuracy: float
    sem_best_test_accuracy: float
    per_run_best_test: List[float]
    per_run_best_train: List[float]


def _sem(values: np.ndarray, axis=0) -> np.ndarray:
    r = values.shape[axis]
    if r < 2:
        return np.zeros(np.delete(values.shape, axis))
    sem = values.std(axis=axis, ddof=1) / np.sqrt(r)
    # identical samples must give exactly zero, not cancellation noise
    spread = values.max(axis=axis) - values.min(axis=axis)
    return np.where(spread == 0.0, 0.0, sem)


def aggregate(runs: Sequence[RunMetrics]) -> AggregateResult:
    """Mean and standard-error curves plus the best-accuracy table row."""
    if not runs:
        raise ConfigError("nothing to aggregate")
    lengths = {len(r.epochs) for r in runs}
    if len(lengths) != 1:
        raise ConfigError(f"runs disagree on epoch count: {sorted(lengths)}")
    test = np.stack([r.curve("test_accuracy") for r in runs])
    train = np.stack([r.curve("train_accuracy") for r in runs])
    risk_curve = np.stack([r.curve("train_risk") for r in runs])
    best_test = np.array([r.best_test_accuracy for r in runs])
    best_train = np.array([r.best_train_accuracy for r in runs])
    return AggregateResult(
        epochs=np.array([e.epoch for e in runs[0].epochs]),
        mean_test_accuracy=test.mean(axis=0),
        sem_test_accuracy=_sem(test),
        mean_train_accuracy=train.mean(axis=0),
        sem_train_accuracy=_sem(train),
        mean_train_risk=risk_curve.mean(axis=0),
        mean_best_train_accuracy=float(best_train.mean()),
        mean_best_test_accuracy=float(best_test.mean()),
        sem_best_test_accuracy=float(_sem(best_test[:, None])[0]) if len(runs) > 1 else 0.0,
        per_run_best_test=[float(x) for x in best_test],
        per_run_best_train=[float(x) for x in best_train],
    )
