import numpy as np
import pytest

from kgrec import evaluate


def brute_force_auc(scores, labels):
    """Quadratic oracle: average pairwise win rate with half-credit ties."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = scores[np.asarray(labels) == 1]
    neg = scores[np.asarray(labels) == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def test_auc_perfect_ranking():
    assert evaluate.auc([0.9, 0.1], [1, 0]) == 1.0


def test_auc_all_ties():
    assert evaluate.auc([0.4, 0.4, 0.4, 0.4], [1, 0, 1, 0]) == 0.5


def test_auc_single_class_error():
    with pytest.raises(ValueError):
        evaluate.auc([0.5, 0.6], [1, 1])
    with pytest.raises(ValueError):
        evaluate.auc([0.5, 0.6], [0, 0])


def test_auc_matches_brute_force_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        scores = rng.choice(np.linspace(0, 1, 60), size=200)  # forces ties
        labels = rng.integers(0, 2, size=200)
        if labels.min() == labels.max():
            continue
        assert evaluate.auc(scores, labels) == pytest.approx(
            brute_force_auc(scores, labels), abs=1e-12)


def test_auc_invariant_under_monotone_transforms():
    rng = np.random.default_rng(1)
    scores = rng.normal(size=300)
    labels = rng.integers(0, 2, size=300)
    base = evaluate.auc(scores, labels)
    assert evaluate.auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
    assert evaluate.auc(3.5 * scores + 11.0, labels) == pytest.approx(base,
                                                                      abs=1e-12)


def test_recall_basic_cases():
    # one positive ranked first
    assert evaluate.recall_from_scores(
        np.array([5, 6, 7]), np.array([0.9, 0.5, 0.1]), {5}, k=2) == 1.0
    # two positives, one inside the top 10
    item_ids = np.arange(20)
    scores = np.linspace(1.0, 0.05, 20)
    assert evaluate.recall_from_scores(item_ids, scores, {0, 19}, k=10) == 0.5


def test_recall_tie_break_by_item_id():
    item_ids = np.array([9, 3, 7])
    scores = np.array([0.5, 0.5, 0.5])
    # all tied: the top-1 slot goes to the smallest item id
    assert evaluate.recall_from_scores(item_ids, scores, {3}, k=1) == 1.0
    assert evaluate.recall_from_scores(item_ids, scores, {9}, k=1) == 0.0


def test_recall_monotone_in_k():
    rng = np.random.default_rng(2)
    item_ids = np.arange(50)
    scores = rng.random(50)
    positives = set(rng.choice(50, size=8, replace=False).tolist())
    values = [evaluate.recall_from_scores(item_ids, scores, positives, k)
              for k in range(1, 51)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert values[-1] == 1.0


def test_recall_requires_positives():
    with pytest.raises(ValueError):
        evaluate.recall_from_scores(np.array([1]), np.array([0.5]), set(), 1)


def test_mean_recall_skips_users_without_positives():
    from kgrec import gnn
    from helpers import random_kg
    rng = np.random.default_rng(3)
    kg = random_kg(rng, 30, 3, 8)
    params = gnn.init_params(3, 3, 30, 4, 1, rng)
    from kgrec.train import HyperParams
    hp = HyperParams(S=3, d=4, L=1)
    eval_pos = [[2], [], [5]]  # user 1 has nothing held out
    train_pos = [[0], [1], [3]]
    got = evaluate.mean_recall(kg, params, hp, eval_pos, train_pos,
                               np.random.default_rng(4), k=3)
    assert 0.0 <= got <= 1.0
    rng2 = np.random.default_rng(4)  # replay the same draw sequence
    r0 = evaluate.user_recall_at_k(kg, params, hp, 0,
                                   np.setdiff1d(np.arange(8), [0]), [2], 3, rng2)
    r2 = evaluate.user_recall_at_k(kg, params, hp, 2,
                                   np.setdiff1d(np.arange(8), [3]), [5], 3, rng2)
    assert got == pytest.approx((r0 + r2) / 2.0)
