"""Implicit-feedback interactions: thresholding, negative sampling, splits.

Explicit ratings are converted to implicit labels: ratings at or above the
positive threshold become label-1 rows, ratings below it are discarded
entirely (they are neither positives nor negative-sampling candidates).
Each user then receives as many sampled label-0 rows as they have positives,
drawn from items they never rated.
"""

import os
from dataclasses import dataclass

import numpy as np

from kgrec.errors import ParseError


@dataclass
class RawRatings:
    """Per-user positive items plus the sub-threshold items that were seen."""

    n_users: int
    n_items: int
    user_tokens: list
    positives: list          # per user, list of item ids
    discarded: list          # per user, set of item ids rated below threshold
    timestamps: list = None  # per user, list parallel to positives, or None


@dataclass
class InteractionMatrix:
    """Row-wise (user, item, label) triples, sorted by (user, item)."""

    users: np.ndarray
    items: np.ndarray
    labels: np.ndarray
    n_users: int
    n_items: int
    timestamps: np.ndarray = None

    def __len__(self):
        return len(self.users)

    def take(self, idx):
        idx = np.asarray(idx)
        ts = None if self.timestamps is None else self.timestamps[idx]
        return InteractionMatrix(self.users[idx], self.items[idx],
                                 self.labels[idx], self.n_users, self.n_items,
                                 timestamps=ts)

    def sorted(self):
        order = np.lexsort((self.items, self.users))
        return self.take(order)

    def positives_by_user(self):
        out = [[] for _ in range(self.n_users)]
        for u, it, y in zip(self.users, self.items, self.labels):
            if y == 1:
                out[u].append(int(it))
        return out

    def rows_by_user(self):
        """Per user, (items, labels) arrays; empty arrays for absent users."""
        out = []
        for u in range(self.n_users):
            mask = self.users == u
            out.append((self.items[mask], self.labels[mask]))
        return out


@dataclass
class Split:
    train: InteractionMatrix
    valid: InteractionMatrix
    test: InteractionMatrix


def load_ratings(path, positive_threshold, item_lookup=None):
    """Read a ``user\\titem\\trating[\\ttimestamp]`` TSV into positives.

    Ratings >= positive_threshold are positives; lower ratings are recorded
    as discarded for the user (excluded later from their negative pool);
    threshold None marks every interaction positive.  `item_lookup` maps item
    tokens to dense ids (rows for unknown items are skipped); without it item
    tokens are interned in first-seen order.
    """
    user_table, user_tokens = {}, []
    own_items = item_lookup is None
    item_table = {} if own_items else item_lookup
    positives, discarded, timestamps = [], [], []
    has_ts = None

    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) not in (3, 4):
                raise ParseError(path, lineno,
                                 f"expected 3 or 4 tab-separated fields, got {len(parts)}")
            if has_ts is None:
                has_ts = len(parts) == 4
            elif has_ts != (len(parts) == 4):
                raise ParseError(path, lineno, "inconsistent timestamp column")
            try:
                rating = float(parts[2])
                ts = float(parts[3]) if has_ts else None
            except ValueError as exc:
                raise ParseError(path, lineno, f"bad numeric field: {exc}") from None

            utok, itok = parts[0], parts[1]
            if utok not in user_table:
                user_table[utok] = len(user_tokens)
                user_tokens.append(utok)
                positives.append([])
                discarded.append(set())
                timestamps.append([])
            u = user_table[utok]

            if own_items:
                if itok not in item_table:
                    item_table[itok] = len(item_table)
                item = item_table[itok]
            else:
                item = item_table.get(itok)
                if item is None:
                    continue  # item not in the KG item map

            if positive_threshold is None or rating >= positive_threshold:
                if item not in positives[u]:
                    positives[u].append(item)
                    if has_ts:
                        timestamps[u].append(ts)
            else:
                discarded[u].add(item)

    n_items = len(item_table)
    return RawRatings(n_users=len(user_tokens), n_items=n_items,
                      user_tokens=user_tokens, positives=positives,
                      discarded=discarded,
                      timestamps=timestamps if has_ts else None)


def negative_sample(raw, n_items, rng):
    """Balance each user's positives with uniform unrated negatives.

    Negatives are drawn without replacement from the items the user has no
    positive for and did not rate below threshold; the count matches the
    user's positives, truncated when the candidate pool is smaller.  Users
    with zero positives contribute no rows.
    """
    users, items, labels, ts_rows = [], [], [], []
    has_ts = raw.timestamps is not None
    all_items = np.arange(n_items, dtype=np.int64)
    for u in range(raw.n_users):
        pos = raw.positives[u]
        if not pos:
            continue
        blocked = np.fromiter(set(pos) | raw.discarded[u], dtype=np.int64)
        pool = np.setdiff1d(all_items, blocked, assume_unique=False)
        k = min(len(pos), len(pool))
        negs = rng.choice(pool, size=k, replace=False) if k else np.empty(0, np.int64)
        users.extend([u] * (len(pos) + k))
        items.extend(pos)
        items.extend(negs.tolist())
        labels.extend([1] * len(pos))
        labels.extend([0] * k)
        if has_ts:
            ts_rows.extend(raw.timestamps[u])
            ts_rows.extend(raw.timestamps[u][:k])  # negatives inherit paired positive's day

    matrix = InteractionMatrix(
        users=np.asarray(users, dtype=np.int64),
        items=np.asarray(items, dtype=np.int64),
        labels=np.asarray(labels, dtype=np.int64),
        n_users=raw.n_users, n_items=n_items,
        timestamps=np.asarray(ts_rows, dtype=np.float64) if has_ts else None)
    return matrix.sorted()


def split(matrix, rng, ratios=(0.6, 0.2, 0.2)):
    """Shuffle rows and partition 6:2:2; remainder rows go to train."""
    n = len(matrix)
    if n < 5:
        raise ValueError(f"need at least 5 rows to split, got {n}")
    perm = rng.permutation(n)
    n_valid = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_valid - n_test
    train_idx = np.sort(perm[:n_train])
    valid_idx = np.sort(perm[n_train:n_train + n_valid])
    test_idx = np.sort(perm[n_train + n_valid:])
    return Split(train=matrix.take(train_idx), valid=matrix.take(valid_idx),
                 test=matrix.take(test_idx))


def write_matrix(matrix, path):
    with open(path, "w", encoding="utf-8") as f:
        for u, it, y in zip(matrix.users, matrix.items, matrix.labels):
            f.write(f"{u}\t{it}\t{y}\n")


def write_split(s, out_dir):
    for name, matrix in (("train", s.train), ("valid", s.valid), ("test", s.test)):
        write_matrix(matrix, os.path.join(out_dir, f"{name}.tsv"))


def read_matrix(path, n_users, n_items):
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, lineno,
                                 f"expected 3 tab-separated fields, got {len(parts)}")
            rows.append((int(parts[0]), int(parts[1]), int(parts[2])))
    arr = np.asarray(rows, dtype=np.int64).reshape(-1, 3)
    return InteractionMatrix(arr[:, 0], arr[:, 1], arr[:, 2],
                             n_users=n_users, n_items=n_items)
