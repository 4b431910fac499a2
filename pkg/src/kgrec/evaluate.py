"""Ranking and CTR metrics: AUC, Recall@K, optional per-day breakdown."""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from kgrec import gnn


@dataclass
class EvalReport:
    auc: float
    recall_at: dict = field(default_factory=dict)
    daily_auc: list = None  # (day, auc) pairs when timestamps are available


def auc(scores, labels):
    """Probability that a random positive outranks a random negative.

    Rank-sum computation, ties count one half; O(n log n).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: need at least one positive and one negative")
    ranks = rankdata(scores, method="average")
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def recall_from_scores(item_ids, scores, test_positives, k):
    """|top-k intersect positives| / |positives|; ties broken by item id."""
    test_positives = set(int(i) for i in test_positives)
    if not test_positives:
        raise ValueError("user has no test positives")
    order = np.lexsort((item_ids, -np.asarray(scores)))
    top = set(int(item_ids[i]) for i in order[:k])
    return len(top & test_positives) / len(test_positives)


def user_recall_at_k(kg, params, hp, user, candidates, test_positives, k, rng):
    scores = gnn.score_items(kg, params, user, candidates, hp.S, hp.L, rng)
    return recall_from_scores(np.asarray(candidates), scores, test_positives, k)


def mean_recall(kg, params, hp, eval_pos, train_pos, rng, k=10):
    """Recall@k averaged over users; users without held-out positives are
    skipped, not counted as zero.  Candidates are every item outside the
    user's training positives."""
    all_items = np.arange(kg.n_items, dtype=np.int64)
    vals = []
    for user, positives in enumerate(eval_pos):
        if not positives:
            continue
        candidates = np.setdiff1d(all_items,
                                  np.asarray(train_pos[user], dtype=np.int64))
        if not len(candidates):
            continue
        vals.append(user_recall_at_k(kg, params, hp, user, candidates,
                                     positives, k, rng))
    return float(np.mean(vals)) if vals else float("nan")


def score_matrix_rows(kg, params, hp, matrix, rng):
    """Model scores for every (user, item) row of an interaction matrix."""
    scores = np.empty(len(matrix), dtype=np.float64)
    for user in np.unique(matrix.users):
        mask = matrix.users == user
        scores[mask] = gnn.score_items(kg, params, int(user),
                                       matrix.items[mask], hp.S, hp.L, rng)
    return scores


def ctr_auc(kg, params, hp, matrix, rng):
    return auc(score_matrix_rows(kg, params, hp, matrix, rng), matrix.labels)


def daily_auc(kg, params, hp, matrix, rng, day_seconds=86400.0):
    """Per-day AUC for timestamped rows; days lacking both classes are skipped."""
    if matrix.timestamps is None:
        return None
    scores = score_matrix_rows(kg, params, hp, matrix, rng)
    days = np.floor(matrix.timestamps / day_seconds).astype(np.int64)
    out = []
    for day in np.unique(days):
        mask = days == day
        labels = matrix.labels[mask]
        if (labels == 1).any() and (labels == 0).any():
            out.append((int(day), auc(scores[mask], labels)))
    return out


def evaluate_matrix(kg, params, hp, matrix, train_pos, rng, ks=(2, 10, 50, 100)):
    """Full report on a held-out matrix: CTR AUC plus Recall@K curve."""
    report = EvalReport(auc=ctr_auc(kg, params, hp, matrix, rng))
    eval_pos = matrix.positives_by_user()
    for k in ks:
        report.recall_at[k] = mean_recall(kg, params, hp, eval_pos, train_pos,
                                          rng, k=k)
    if matrix.timestamps is not None:
        report.daily_auc = daily_auc(kg, params, hp, matrix, rng)
    return report
