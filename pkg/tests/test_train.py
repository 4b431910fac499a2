import math

import numpy as np
import pytest

from kgrec import gnn, interactions
from kgrec import train as trainmod
from kgrec.errors import CheckpointError, DimensionError, TrainingDiverged
from kgrec.gradcheck import build_check_setup
from kgrec.train import AdamState, HyperParams, adam_step, unified_loss

from helpers import random_kg


def tiny_dataset(seed=0, n_entities=40, n_items=10, n_users=6, pos_per_user=4):
    rng = np.random.default_rng(seed)
    kg = random_kg(rng, n_entities, 3, n_items)
    users, items, labels = [], [], []
    for u in range(n_users):
        pos = rng.choice(n_items, size=pos_per_user, replace=False)
        neg = rng.choice(np.setdiff1d(np.arange(n_items), pos),
                         size=pos_per_user, replace=False)
        for it in pos:
            users.append(u), items.append(int(it)), labels.append(1)
        for it in neg:
            users.append(u), items.append(int(it)), labels.append(0)
    matrix = interactions.InteractionMatrix(
        np.array(users), np.array(items), np.array(labels),
        n_users=n_users, n_items=n_items).sorted()
    return kg, interactions.split(matrix, rng)


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        HyperParams(S=0)
    with pytest.raises(ValueError):
        HyperParams(L=5)
    with pytest.raises(ValueError):
        HyperParams(lambda_=-0.1)
    with pytest.raises(ValueError):
        HyperParams(eta=-1e-3)
    assert HyperParams(L=2).unroll_steps == 4
    assert HyperParams(L=2, K=7).unroll_steps == 7


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("S = 8\nlambda = 0.1  # smoothing\nd=16\n")
    parsed = trainmod.parse_config(cfg)
    hp = trainmod.hyperparams_from(parsed, **{"lambda": 0.7}, eta=1e-3)
    assert hp.S == 8 and hp.d == 16
    assert hp.lambda_ == 0.7  # flag beats file
    assert hp.eta == 1e-3


def test_config_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("momentum=0.9\n")
    with pytest.raises(Exception):
        trainmod.parse_config(cfg)


def test_loss_reduces_to_prediction_term():
    kg, batch, params, _ = build_check_setup(seed=2)
    hp = HyperParams(S=12, d=4, L=2, lambda_=0.0, gamma=0.0)
    parts, _ = unified_loss(batch, params, hp, kg)
    cache = gnn.batch_forward(kg, batch, params, hp.unroll_steps, with_ls=False)
    bce = -(batch.labels * np.log(cache.yhat)
            + (1 - batch.labels) * np.log(1 - cache.yhat))
    assert parts.total == pytest.approx(float(bce.mean()), abs=1e-12)
    assert parts.smoothness == 0.0 and parts.l2 > 0.0  # l2 reported, unweighted


def test_loss_zero_params_is_log2_per_row():
    kg, batch, params, _ = build_check_setup(seed=2)
    zeroed = gnn.ModelParams(np.zeros_like(params.user_emb),
                             np.zeros_like(params.rel_emb),
                             np.zeros_like(params.entity_feat),
                             [np.zeros_like(w) for w in params.weights])
    hp = HyperParams(S=12, d=4, L=2, lambda_=0.0, gamma=1e-3)
    parts, _ = unified_loss(batch, zeroed, hp, kg)
    assert parts.total == pytest.approx(math.log(2.0), abs=1e-12)


def test_l2_term_closed_form():
    kg, batch, params, _ = build_check_setup(seed=4)
    hp = HyperParams(S=12, d=4, L=2, lambda_=0.0, gamma=0.37)
    parts, _ = unified_loss(batch, params, hp, kg)
    manual = sum(float((t * t).sum()) for _, t in params.named_tensors())
    assert parts.l2 == pytest.approx(manual, rel=1e-15)
    assert parts.total == pytest.approx(parts.prediction + 0.37 * manual,
                                        rel=1e-12)


def test_loss_flags_non_finite_term():
    kg, batch, params, _ = build_check_setup(seed=4)
    params.entity_feat[0, 0] = 1e200  # squared norm overflows
    hp = HyperParams(S=12, d=4, L=2, lambda_=0.0, gamma=1.0)
    with pytest.raises(TrainingDiverged, match="l2"):
        unified_loss(batch, params, hp, kg)


def _params_pair(seed=0):
    rng = np.random.default_rng(seed)
    params = gnn.init_params(3, 2, 5, 4, 1, rng)
    return params, AdamState.zeros(params)


def test_adam_zero_gradient_no_change():
    params, state = _params_pair()
    before = params.copy()
    grads = gnn.zero_grads(params)
    adam_step(params, grads, state, eta=0.1)
    for (_, a), (_, b) in zip(params.named_tensors(), before.named_tensors()):
        assert np.array_equal(a, b)
    assert state.step == 1


def test_adam_first_step_is_signed_eta():
    params, state = _params_pair(1)
    before = params.copy()
    grads = gnn.zero_grads(params)
    grads.user_emb[:] = np.random.default_rng(2).normal(size=grads.user_emb.shape)
    adam_step(params, grads, state, eta=0.01)
    delta = params.user_emb - before.user_emb
    # bias-corrected m/sqrt(v) is +-1 on the first step, up to eps
    assert np.allclose(delta, -0.01 * np.sign(grads.user_emb), rtol=1e-5)


def test_adam_tensors_update_independently():
    params, state = _params_pair(3)
    before = params.copy()
    grads = gnn.zero_grads(params)
    grads.rel_emb[0, 0] = 1.0
    adam_step(params, grads, state, eta=0.05)
    assert np.array_equal(params.user_emb, before.user_emb)
    assert np.array_equal(params.entity_feat, before.entity_feat)
    assert not np.array_equal(params.rel_emb, before.rel_emb)


def test_adam_nonzero_grad_changes_something():
    params, state = _params_pair(4)
    before = params.copy()
    grads = gnn.zero_grads(params)
    grads.entity_feat[2, 1] = -0.3
    adam_step(params, grads, state, eta=1e-3)
    changed = any(not np.array_equal(a, b)
                  for (_, a), (_, b) in zip(params.named_tensors(),
                                            before.named_tensors()))
    assert changed


def test_train_deterministic_replay():
    kg, split = tiny_dataset()
    hp = HyperParams(S=3, d=4, L=1, epochs=3, batch_size=4, seed=11, eta=1e-2)
    a = trainmod.train(split, kg, hp)
    b = trainmod.train(split, kg, hp)
    assert a.metrics == b.metrics  # bitwise-equal floats
    for (_, x), (_, y) in zip(a.params.named_tensors(), b.params.named_tensors()):
        assert np.array_equal(x, y)


def test_train_eta_zero_leaves_params_at_init():
    kg, split = tiny_dataset()
    hp = HyperParams(S=3, d=4, L=1, epochs=2, batch_size=4, seed=11, eta=0.0,
                     gamma=0.0)
    result = trainmod.train(split, kg, hp)
    init = gnn.init_params(split.train.n_users, kg.n_relations, kg.n_entities,
                           hp.d, hp.L, np.random.default_rng([hp.seed, 0]))
    for (_, got), (_, want) in zip(result.params.named_tensors(),
                                   init.named_tensors()):
        assert np.array_equal(got, want)


def test_train_metrics_csv(tmp_path):
    kg, split = tiny_dataset()
    hp = HyperParams(S=3, d=4, L=1, epochs=2, batch_size=4, seed=5)
    result = trainmod.train(split, kg, hp)
    path = tmp_path / "metrics.csv"
    trainmod.write_metrics_csv(result.metrics, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "epoch,train_loss,val_auc,val_r10"
    assert len(lines) == 3


def test_train_divergence_aborts_with_last_good(monkeypatch):
    kg, split = tiny_dataset()
    hp = HyperParams(S=3, d=4, L=1, epochs=4, batch_size=4, seed=5)
    calls = {"n": 0}
    real = trainmod.unified_loss

    def flaky(batch, params, hp_, kg_, with_grads=True):
        calls["n"] += 1
        if calls["n"] > 15:
            raise TrainingDiverged("non-finite prediction term in loss")
        return real(batch, params, hp_, kg_, with_grads)

    monkeypatch.setattr(trainmod, "unified_loss", flaky)
    with pytest.raises(TrainingDiverged) as err:
        trainmod.train(split, kg, hp)
    assert err.value.params is not None
    assert err.value.epoch >= 0


def test_checkpoint_roundtrip_bitwise(tmp_path):
    params, state = _params_pair(6)
    grads = gnn.zero_grads(params)
    grads.user_emb[:] = 0.123
    adam_step(params, grads, state, eta=0.01)
    hp = HyperParams(S=2, d=4, L=1, seed=9)
    path = tmp_path / "model.ckpt"
    trainmod.checkpoint_save(path, params, state, hp, epoch=7)
    params2, state2, hp2, epoch = trainmod.checkpoint_load(path)
    assert epoch == 7
    assert hp2 == hp
    for (_, a), (_, b) in zip(params.named_tensors(), params2.named_tensors()):
        assert np.array_equal(a, b)
    assert state2.step == state.step
    for name in state.m:
        assert np.array_equal(state.m[name], state2.m[name])
        assert np.array_equal(state.v[name], state2.v[name])


def test_checkpoint_dimension_mismatch(tmp_path):
    params, state = _params_pair(7)
    hp = HyperParams(S=2, d=4, L=1)
    path = tmp_path / "model.ckpt"
    trainmod.checkpoint_save(path, params, state, hp, epoch=1)
    with pytest.raises(DimensionError):
        trainmod.checkpoint_load(path, expected_hp=HyperParams(S=2, d=8, L=1))


def test_checkpoint_truncated_and_bad_magic(tmp_path):
    params, state = _params_pair(8)
    hp = HyperParams(S=2, d=4, L=1)
    path = tmp_path / "model.ckpt"
    trainmod.checkpoint_save(path, params, state, hp, epoch=1)
    blob = path.read_bytes()
    (tmp_path / "cut.ckpt").write_bytes(blob[:len(blob) - 40])
    with pytest.raises(CheckpointError, match="truncated"):
        trainmod.checkpoint_load(tmp_path / "cut.ckpt")
    (tmp_path / "junk.ckpt").write_bytes(b"NOTACKPT" + blob[8:])
    with pytest.raises(CheckpointError, match="not a checkpoint"):
        trainmod.checkpoint_load(tmp_path / "junk.ckpt")


def test_resume_matches_uninterrupted_run(tmp_path):
    kg, split = tiny_dataset(seed=1)
    hp5 = HyperParams(S=3, d=4, L=1, epochs=5, batch_size=4, seed=13, eta=1e-2)
    full = trainmod.train(split, kg, hp5)

    hp3 = HyperParams(S=3, d=4, L=1, epochs=3, batch_size=4, seed=13, eta=1e-2)
    ckpt = tmp_path / "last.ckpt"
    trainmod.train(split, kg, hp3, checkpoint_path=ckpt)
    resumed = trainmod.train(split, kg, hp5, resume_from=ckpt)

    full_by_epoch = {m["epoch"]: m for m in full.metrics}
    for m in resumed.metrics:
        assert m["train_loss"] == full_by_epoch[m["epoch"]]["train_loss"]
        assert m["val_auc"] == full_by_epoch[m["epoch"]]["val_auc"]
