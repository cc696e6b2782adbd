import json
from dataclasses import replace

import numpy as np
import pytest

from qpace.curriculum import preset
from qpace.errors import ConfigError, NumericsError
from qpace.models import ModelSpec, generate_dataset
from qpace.training import (AdamState, RunMetrics, TrainConfig, adam_step, aggregate,
                            train_run)


def small_config(cluster_spec, strategy_name="standard", family="self-paced", **kw):
    defaults = dict(train_size=12, test_size=16, epochs=4, steps_per_epoch=2,
                    minibatch=4, run_seed=9, train_dataset_seed=31, test_dataset_seed=32)
    defaults.update(kw)
    strat = preset(strategy_name, family, train_size=defaults["train_size"],
                   minibatch=defaults["minibatch"], epochs=defaults["epochs"])
    return TrainConfig(model=cluster_spec, strategy=strat, **defaults)


@pytest.fixture(scope="module")
def small_sets(cluster_spec):
    train = generate_dataset(cluster_spec, 12, seed=31)
    test = generate_dataset(cluster_spec, 16, seed=32, role="test")
    return train, test


# --- ADAM -------------------------------------------------------------------

def test_adam_zero_gradient_keeps_params():
    state = AdamState.fresh(3, learning_rate=0.1)
    params = np.array([1.0, -2.0, 0.5])
    state, new = adam_step(state, params, np.zeros(3))
    assert np.array_equal(new, params)
    assert state.step == 1


def test_adam_first_step_hand_computed():
    # one step with gradient g: m_hat = g, v_hat = g^2, update = -lr*g/(|g|+eps)
    lr, eps = 0.05, 1e-8
    state = AdamState.fresh(2, learning_rate=lr, epsilon=eps)
    g = np.array([0.3, -0.7])
    _, new = adam_step(state, np.zeros(2), g)
    expected = -lr * g / (np.abs(g) + eps)
    assert np.allclose(new, expected, atol=1e-15)


def test_adam_constant_gradient_approaches_sign_step():
    state = AdamState.fresh(1, learning_rate=0.01)
    params = np.zeros(1)
    g = np.array([2.5])
    prev = params.copy()
    for _ in range(500):
        prev = params.copy()
        state, params = adam_step(state, params, g)
    assert abs((prev - params)[0]) == pytest.approx(0.01, rel=1e-3)


def test_adam_validation():
    state = AdamState.fresh(2, learning_rate=0.1)
    with pytest.raises(ConfigError):
        adam_step(state, np.zeros(3), np.zeros(3))
    with pytest.raises(NumericsError):
        adam_step(state, np.zeros(2), np.array([np.nan, 0.0]))


# --- train_run ---------------------------------------------------------------

def serialize_metrics(m: RunMetrics) -> bytes:
    payload = {
        "best": [m.best_train_accuracy, m.best_train_epoch,
                 m.best_test_accuracy, m.best_test_epoch],
        "theta": m.final_params.tolist(),
        "epochs": [[e.epoch, e.train_accuracy, e.test_accuracy, e.train_risk,
                    e.available_size, e.minibatches, e.scores.tolist()]
                   for e in m.epochs],
    }
    return json.dumps(payload).encode()


def test_train_run_determinism(cluster_spec, small_sets):
    train, test = small_sets
    cfg = small_config(cluster_spec, "hardest")
    a = train_run(cfg, train_ds=train, test_ds=test)
    b = train_run(cfg, train_ds=train, test_ds=test)
    assert serialize_metrics(a) == serialize_metrics(b)


def test_standard_availability_is_full(cluster_spec, small_sets):
    train, test = small_sets
    m = train_run(small_config(cluster_spec, "standard"), train_ds=train, test_ds=test)
    assert all(e.available_size == len(train) for e in m.epochs)


def test_hardest_availability_constant_with_churn(cluster_spec, small_sets):
    train, test = small_sets
    cfg = small_config(cluster_spec, "hardest", epochs=6)
    m = train_run(cfg, train_ds=train, test_ds=test)
    assert all(e.available_size == 4 for e in m.epochs)  # minibatch-size subset
    # membership may churn: scores are re-computed every epoch
    assert any(not np.array_equal(m.epochs[0].scores, e.scores) for e in m.epochs[1:])


def test_full_uniform_equals_standard(cluster_spec, small_sets):
    from qpace.curriculum import PacingFn, Scorer, Strategy

    train, test = small_sets
    cfg_std = small_config(cluster_spec, "standard")
    clone = Strategy("clone", Scorer("uniform"), "ascending", PacingFn("full"))
    cfg_clone = replace(cfg_std, strategy=clone)
    a = train_run(cfg_std, train_ds=train, test_ds=test)
    b = train_run(cfg_clone, train_ds=train, test_ds=test)
    assert np.array_equal(a.final_params, b.final_params)
    assert a.curve("test_accuracy").tolist() == b.curve("test_accuracy").tolist()


def test_self_taught_reference_and_scoring(cluster_spec, small_sets):
    train, test = small_sets
    cfg = small_config(cluster_spec, "hard", family="self-taught", epochs=3)
    m = train_run(cfg, train_ds=train, test_ds=test)
    # static scorer: identical score vector on every epoch
    for e in m.epochs[1:]:
        assert np.array_equal(m.epochs[0].scores, e.scores)


def test_best_accuracy_tracks_max(cluster_spec, small_sets):
    train, test = small_sets
    m = train_run(small_config(cluster_spec, "standard", epochs=5),
                  train_ds=train, test_ds=test)
    assert m.best_test_accuracy == max(e.test_accuracy for e in m.epochs)
    assert m.best_train_accuracy == max(e.train_accuracy for e in m.epochs)
    best_epoch_acc = [e for e in m.epochs if e.epoch == m.best_test_epoch][0]
    assert best_epoch_acc.test_accuracy == m.best_test_accuracy


def test_train_risk_decreases_in_smoke_runs(cluster_spec, small_sets):
    train, test = small_sets
    improved = 0
    for seed in range(10):
        cfg = small_config(cluster_spec, "standard", epochs=5, run_seed=100 + seed,
                           learning_rate=0.05)
        m = train_run(cfg, train_ds=train, test_ds=test)
        risks = m.curve("train_risk")
        improved += risks[-1] < risks[0]
    assert improved >= 8


def test_all_params_remain_finite(cluster_spec, small_sets):
    train, test = small_sets
    m = train_run(small_config(cluster_spec, "hardest"), train_ds=train, test_ds=test)
    assert np.all(np.isfinite(m.final_params))


def test_checkpoint_resume_matches_uninterrupted(tmp_path, cluster_spec, small_sets):
    train, test = small_sets
    cfg = small_config(cluster_spec, "hardest", epochs=6)
    full = train_run(cfg, train_ds=train, test_ds=test)

    ck = tmp_path / "ck.npz"
    cfg3 = replace(cfg, epochs=3)
    train_run(cfg3, train_ds=train, test_ds=test, checkpoint_path=ck)
    resumed = train_run(cfg, train_ds=train, test_ds=test, checkpoint_path=ck)
    assert [e.epoch for e in resumed.epochs] == [4, 5, 6]
    for e_full, e_res in zip(full.epochs[3:], resumed.epochs):
        assert e_full.test_accuracy == e_res.test_accuracy
        assert e_full.minibatches == e_res.minibatches
    assert np.array_equal(full.final_params, resumed.final_params)


def test_epoch_callback_streams_metrics(cluster_spec, small_sets):
    train, test = small_sets
    seen = []
    m = train_run(small_config(cluster_spec), train_ds=train, test_ds=test,
                  epoch_callback=seen.append)
    assert [e.epoch for e in seen] == [e.epoch for e in m.epochs]
    assert seen[0] is m.epochs[0]


def test_xxz_training_end_to_end(xxz_spec):
    train = generate_dataset(xxz_spec, 9, seed=61)
    test = generate_dataset(xxz_spec, 9, seed=62, role="test")
    strat = preset("hardest", "self-paced", train_size=9, minibatch=3, epochs=3)
    cfg = TrainConfig(model=xxz_spec, strategy=strat, train_size=9, test_size=9,
                      epochs=3, steps_per_epoch=2, minibatch=3, run_seed=8,
                      train_dataset_seed=61, test_dataset_seed=62)
    m = train_run(cfg, train_ds=train, test_ds=test)
    assert len(m.epochs) == 3
    assert 0.0 <= m.best_test_accuracy <= 1.0
    assert all(e.available_size == 3 for e in m.epochs)


def test_non_finite_risk_aborts_with_diagnostics(cluster_spec, small_sets, monkeypatch):
    from qpace import qcnn as qmod

    train, test = small_sets
    real = qmod.losses_from_probs

    def poisoned(probs, labels, m):
        out = real(probs, labels, m)
        return np.full_like(out, np.nan)

    monkeypatch.setattr(qmod, "losses_from_probs", poisoned)
    with pytest.raises(NumericsError, match="epoch 1"):
        train_run(small_config(cluster_spec), train_ds=train, test_ds=test)


def test_model_size_mismatch(cluster_spec):
    spec4 = ModelSpec.cluster(4)
    cfg = small_config(spec4)
    with pytest.raises(ConfigError):
        train_run(cfg, train_ds=generate_dataset(spec4, 8, seed=1),
                  test_ds=generate_dataset(spec4, 8, seed=2))


# --- aggregate ----------------------------------------------------------------

def _fake_run(accs, risks=None):
    from qpace.training import EpochMetrics

    risks = risks or [0.5] * len(accs)
    epochs = [EpochMetrics(i + 1, a, a, r, 10, [[0]], np.zeros(2))
              for i, (a, r) in enumerate(zip(accs, risks))]
    return RunMetrics("x", 0, epochs, max(accs), int(np.argmax(accs)) + 1,
                      max(accs), int(np.argmax(accs)) + 1, np.zeros(2), np.zeros(2))


def test_aggregate_single_run():
    agg = aggregate([_fake_run([0.5, 0.7])])
    assert np.all(agg.sem_test_accuracy == 0.0)
    assert agg.mean_best_test_accuracy == pytest.approx(0.7)


def test_aggregate_two_runs():
    agg = aggregate([_fake_run([0.8, 0.8]), _fake_run([0.9, 0.9])])
    assert agg.mean_test_accuracy[0] == pytest.approx(0.85)
    assert agg.sem_test_accuracy[0] == pytest.approx(0.05)
    assert agg.mean_best_test_accuracy == pytest.approx(0.85)
    assert agg.sem_best_test_accuracy == pytest.approx(0.05)


def test_aggregate_identical_runs_zero_sem():
    runs = [_fake_run([0.6, 0.9, 0.7]) for _ in range(10)]
    agg = aggregate(runs)
    assert np.all(agg.sem_test_accuracy == 0.0)


def test_aggregate_epoch_mismatch():
    with pytest.raises(ConfigError):
        aggregate([_fake_run([0.5]), _fake_run([0.5, 0.6])])
