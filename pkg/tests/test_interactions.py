import numpy as np
import pytest

from kgrec import interactions
from kgrec.errors import ParseError

from helpers import write_tsv


def test_threshold_discards_low_ratings(tmp_path):
    path = write_tsv(tmp_path / "r.tsv", [("u", "i", 5), ("u", "j", 3)])
    raw = interactions.load_ratings(path, 4)
    assert raw.positives[0] == [0]
    assert raw.discarded[0] == {1}


def test_threshold_none_all_positive(tmp_path):
    path = write_tsv(tmp_path / "r.tsv",
                     [("u", "a", 1), ("u", "b", 2), ("v", "c", 0)])
    raw = interactions.load_ratings(path, None)
    assert sum(len(p) for p in raw.positives) == 3
    assert all(not d for d in raw.discarded)


def test_load_ratings_parse_error_lineno(tmp_path):
    path = write_tsv(tmp_path / "r.tsv", [("u", "i", 5), ("u", "j", "high")])
    with pytest.raises(ParseError) as err:
        interactions.load_ratings(path, 4)
    assert err.value.lineno == 2


def test_load_ratings_unknown_items_skipped(tmp_path):
    path = write_tsv(tmp_path / "r.tsv", [("u", "known", 5), ("u", "ghost", 5)])
    raw = interactions.load_ratings(path, 4, item_lookup={"known": 0})
    assert raw.positives[0] == [0]


def test_negative_sample_balances_counts(tmp_path):
    path = write_tsv(tmp_path / "r.tsv", [("u", "i0", 5), ("u", "i1", 5)])
    raw = interactions.load_ratings(path, 4,
                                    item_lookup={f"i{k}": k for k in range(10)})
    m = interactions.negative_sample(raw, 10, np.random.default_rng(0))
    assert len(m) == 4
    negs = m.items[m.labels == 0]
    assert len(negs) == 2
    assert not set(negs.tolist()) & {0, 1}


def test_negative_pool_excludes_discarded(tmp_path):
    # 3 items: one positive, one sub-threshold; only item 2 can be a negative
    path = write_tsv(tmp_path / "r.tsv", [("u", "i0", 5), ("u", "i1", 2)])
    raw = interactions.load_ratings(path, 4,
                                    item_lookup={f"i{k}": k for k in range(3)})
    for seed in range(20):
        m = interactions.negative_sample(raw, 3, np.random.default_rng(seed))
        assert m.items[m.labels == 0].tolist() == [2]


def test_negative_sample_empty_pool(tmp_path):
    path = write_tsv(tmp_path / "r.tsv", [("u", "i0", 5), ("u", "i1", 5)])
    raw = interactions.load_ratings(path, 4, item_lookup={"i0": 0, "i1": 1})
    m = interactions.negative_sample(raw, 2, np.random.default_rng(0))
    assert (m.labels == 0).sum() == 0
    assert (m.labels == 1).sum() == 2


def test_negative_sample_zero_positive_user(tmp_path):
    path = write_tsv(tmp_path / "r.tsv", [("u", "i0", 2), ("v", "i1", 5)])
    raw = interactions.load_ratings(path, 4, item_lookup={"i0": 0, "i1": 1})
    m = interactions.negative_sample(raw, 2, np.random.default_rng(0))
    assert 0 not in m.users  # user u contributes no rows
    assert set(m.users.tolist()) == {1}


def test_negative_sample_deterministic(tmp_path):
    rows = [(f"u{k % 5}", f"i{k % 37}", 5) for k in range(80)]
    path = write_tsv(tmp_path / "r.tsv", rows)
    raw = interactions.load_ratings(path, 4,
                                    item_lookup={f"i{k}": k for k in range(37)})
    a = interactions.negative_sample(raw, 37, np.random.default_rng(3))
    b = interactions.negative_sample(raw, 37, np.random.default_rng(3))
    assert np.array_equal(a.items, b.items)
    assert np.array_equal(a.labels, b.labels)


def test_label_balance_random_sweep(tmp_path):
    rng = np.random.default_rng(4)
    for trial in range(10):
        n_items = int(rng.integers(5, 40))
        rows = {(f"u{int(rng.integers(0, 6))}", f"i{int(rng.integers(0, n_items))}")
                for _ in range(60)}
        path = write_tsv(tmp_path / f"r{trial}.tsv",
                         [(u, i, 5) for u, i in sorted(rows)])
        raw = interactions.load_ratings(
            path, 4, item_lookup={f"i{k}": k for k in range(n_items)})
        m = interactions.negative_sample(raw, n_items, rng)
        for u in range(m.n_users):
            labels = m.labels[m.users == u]
            n_pos, n_neg = (labels == 1).sum(), (labels == 0).sum()
            assert n_pos >= n_neg
            if n_pos + len(raw.discarded[u]) + n_pos <= n_items:
                assert n_pos == n_neg  # pool was large enough


def _matrix(n):
    return interactions.InteractionMatrix(
        users=np.zeros(n, dtype=np.int64), items=np.arange(n, dtype=np.int64),
        labels=np.ones(n, dtype=np.int64), n_users=1, n_items=n)


def test_split_sizes():
    s = interactions.split(_matrix(10), np.random.default_rng(0))
    assert (len(s.train), len(s.valid), len(s.test)) == (6, 2, 2)
    s = interactions.split(_matrix(5), np.random.default_rng(0))
    assert (len(s.train), len(s.valid), len(s.test)) == (3, 1, 1)


def test_split_too_small():
    with pytest.raises(ValueError):
        interactions.split(_matrix(4), np.random.default_rng(0))


def test_split_deterministic():
    a = interactions.split(_matrix(50), np.random.default_rng(7))
    b = interactions.split(_matrix(50), np.random.default_rng(7))
    assert np.array_equal(a.train.items, b.train.items)
    assert np.array_equal(a.test.items, b.test.items)


def test_split_partition_property_sweep():
    rng = np.random.default_rng(8)
    for n in (5, 6, 7, 11, 33, 100, 517, 1000):
        s = interactions.split(_matrix(n), rng)
        parts = [set(s.train.items.tolist()), set(s.valid.items.tolist()),
                 set(s.test.items.tolist())]
        assert len(s.train) + len(s.valid) + len(s.test) == n
        assert parts[0] | parts[1] | parts[2] == set(range(n))
        assert not (parts[0] & parts[1] or parts[0] & parts[2]
                    or parts[1] & parts[2])
        assert len(s.valid) == n // 5 and len(s.test) == n // 5


def test_split_roundtrip_files(tmp_path):
    m = _matrix(20)
    s = interactions.split(m, np.random.default_rng(9))
    interactions.write_split(s, tmp_path)
    back = interactions.read_matrix(tmp_path / "train.tsv", 1, 20)
    assert np.array_equal(back.items, s.train.items)
    assert np.array_equal(back.labels, s.train.labels)


def test_timestamps_preserved(tmp_path):
    path = write_tsv(tmp_path / "r.tsv",
                     [("u", "i0", 5, 100.0), ("u", "i1", 5, 200.0)])
    raw = interactions.load_ratings(path, 4,
                                    item_lookup={f"i{k}": k for k in range(4)})
    m = interactions.negative_sample(raw, 4, np.random.default_rng(0))
    assert m.timestamps is not None
    assert len(m.timestamps) == len(m)
    assert set(m.timestamps.tolist()) == {100.0, 200.0}
