"""Wall-clock scaling of training versus knowledge-graph size.

The graph is inflated by stacking disjoint copies of the base triples
(fresh entity tokens, same relation vocabulary) while the interactions stay
fixed; with the neighbor sample size and layer count held constant, the
per-batch work should stay flat as the graph grows.
"""

import os
import time

import numpy as np

from kgrec import gnn, interactions, kg as kgmod, train as trainmod


def multiply_triples(triples_path, out_path, multiplier):
    """Write `multiplier` disjoint copies of the triples file.

    Copy c > 0 suffixes entity tokens with ~c, so only copy 0 carries the
    items; edge and entity counts scale by the multiplier.
    """
    with open(triples_path, encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    with open(out_path, "w", encoding="utf-8") as f:
        for ln in lines:
            f.write(ln + "\n")
        for c in range(1, multiplier):
            for ln in lines:
                h, r, t = ln.split("\t")
                f.write(f"{h}~{c}\t{r}\t{t}~{c}\n")


def timed_epoch(kg, split, hp, n_batches):
    """Seconds spent on a fixed schedule of training batches.

    Setup (parameter init, warm-up batch) is excluded from the measurement;
    the timed loop covers receptive-field construction, forward/backward,
    and the optimizer step, cycling the split's batches up to n_batches.
    """
    rng = np.random.default_rng([hp.seed, 0])
    params = gnn.init_params(split.train.n_users, kg.n_relations,
                             kg.n_entities, hp.d, hp.L, rng)
    adam = trainmod.AdamState.zeros(params)
    train_rows = split.train.rows_by_user()
    batches = trainmod._user_batches(split.train, hp.batch_size, rng)
    if not batches:
        raise ValueError("empty training split")

    def run_one(user, items, labels, rng):
        batch = gnn.make_batch(kg, user, items, labels, *train_rows[user],
                               hp.S, hp.L, rng)
        _, grads = trainmod.unified_loss(batch, params, hp, kg)
        trainmod.adam_step(params, grads, adam, hp.eta)

    run_one(*batches[0], rng)  # warm-up
    start = time.perf_counter()
    for i in range(n_batches):
        run_one(*batches[i % len(batches)], rng)
    return time.perf_counter() - start


def benchmark_scalability(triples_path, item_map_path, ratings_path, hp,
                          multipliers, n_batches, work_dir, threshold=None):
    """(multiplier, seconds_per_epoch) rows for each graph inflation."""
    os.makedirs(work_dir, exist_ok=True)
    rows = []
    for m in multipliers:
        if m == 1:
            path = triples_path
        else:
            path = os.path.join(work_dir, f"triples_x{m}.tsv")
            multiply_triples(triples_path, path, m)
        kg = kgmod.load_kg(path, item_map_path)
        lookup = {tok: i for i, tok in enumerate(kg.item_tokens)}
        raw = interactions.load_ratings(ratings_path, threshold, lookup)
        rng = np.random.default_rng(hp.seed)
        matrix = interactions.negative_sample(raw, kg.n_items, rng)
        split = interactions.split(matrix, rng)
        rows.append((m, timed_epoch(kg, split, hp, n_batches)))
    return rows


def write_benchmark_csv(rows, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("multiplier,seconds_per_epoch\n")
        for m, secs in rows:
            f.write(f"{m},{secs:.6f}\n")
