"""Shared builders for the test suite."""

import numpy as np

from kgrec import kg as kgmod
from kgrec.scoring import UserAdjacency


def write_tsv(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write("\t".join(str(x) for x in row) + "\n")
    return str(path)


def random_connected_adjacency(rng, n, extra=1.5, wlo=0.1, whi=2.0,
                               self_loops=False):
    """Random connected graph with positive weights (spanning tree + extras)."""
    edges = {}
    for e in range(1, n):
        a = int(rng.integers(0, e))
        edges[(a, e)] = float(rng.uniform(wlo, whi))
    for _ in range(int(extra * n)):
        a, b = rng.integers(0, n, size=2)
        if a == b:
            continue
        key = (int(min(a, b)), int(max(a, b)))
        if key not in edges:
            edges[key] = float(rng.uniform(wlo, whi))
    return UserAdjacency.from_edges(
        n, [(a, b, w) for (a, b), w in edges.items()], self_loops=self_loops)


def random_clamp(rng, n, n_clamped):
    """Random clamp mask with n_clamped entries at random 0/1 values."""
    mask = np.zeros(n, dtype=bool)
    picks = rng.choice(n, size=n_clamped, replace=False)
    mask[picks] = True
    values = np.zeros(n)
    values[picks] = rng.integers(0, 2, size=n_clamped).astype(np.float64)
    return mask, values


def random_kg(rng, n_entities, n_relations, n_items, extra=1.0):
    """Random connected KnowledgeGraph; items are the first entities."""
    triples = []
    for e in range(1, n_entities):
        triples.append((int(rng.integers(0, e)),
                        int(rng.integers(0, n_relations)), e))
    for _ in range(int(extra * n_entities)):
        a, b = rng.integers(0, n_entities, size=2)
        if a != b:
            triples.append((int(a), int(rng.integers(0, n_relations)), int(b)))
    return kgmod.build_graph(n_entities, n_relations, triples,
                             item_entities=np.arange(n_items))
