"""Knowledge-graph store: loading, neighbor sampling, and proximity analysis.

The graph is undirected, with at most one relation per entity pair: when the
input contains both (h, r1, t) and (t, r2, h), the first-seen relation is
kept.  Items are a subset of entities, mapped through a separate item file.
Adjacency is held in CSR arrays (both edge directions stored) so the BFS
kernels and per-entity slicing stay allocation-free.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from kgrec import pathfind
from kgrec.errors import ParseError, ValidationError

# Sentinel relation returned when sampling neighbors of an isolated entity.
SELF_RELATION = -1

# Returned by shortest_path_distance for pairs further apart than the cap.
UNREACHABLE = -1


@dataclass
class KnowledgeGraph:
    """Immutable triple store with an item/non-item entity partition.

    Attributes
    ----------
    indptr, nbr, rel : CSR adjacency; the slice nbr[indptr[e]:indptr[e+1]]
        lists e's neighbors, rel holds the matching relation ids.  Symmetric:
        every undirected edge appears in both endpoint slices.
    rel_counts : (n_entities, n_relations) sparse matrix of incident-edge
        counts per relation, used to evaluate exact weighted degrees without
        touching the edge list.
    item_entities : entity id of each item, indexed by dense item id.
    """

    n_entities: int
    n_relations: int
    n_edges: int
    indptr: np.ndarray
    nbr: np.ndarray
    rel: np.ndarray
    rel_counts: sp.csr_matrix
    item_entities: np.ndarray
    entity_is_item: np.ndarray
    entity_tokens: list = field(repr=False, default_factory=list)
    relation_tokens: list = field(repr=False, default_factory=list)
    item_tokens: list = field(repr=False, default_factory=list)
    n_self_loops_dropped: int = 0

    @property
    def n_items(self):
        return len(self.item_entities)

    def degree(self, e):
        return int(self.indptr[e + 1] - self.indptr[e])

    def neighbors(self, e):
        """(neighbor ids, relation ids) arrays for entity e."""
        lo, hi = self.indptr[e], self.indptr[e + 1]
        return self.nbr[lo:hi], self.rel[lo:hi]

    def item_entity(self, item):
        return int(self.item_entities[item])


def _intern(token, table, tokens):
    idx = table.get(token)
    if idx is None:
        idx = len(tokens)
        table[token] = idx
        tokens.append(token)
    return idx


def load_kg(triples_path, item_map_path):
    """Load a knowledge graph from a triples TSV and an item-map TSV.

    Triples file: one ``head\\trelation\\ttail`` per line, string tokens,
    interned to dense ids in first-seen order.  Item map: one
    ``item_token\\tentity_token`` per line; entity tokens absent from the
    triples become isolated entities.  Duplicate edges on the same unordered
    entity pair keep the first-seen relation; self-edges are dropped (the
    aggregation adds its own self-connections later).
    """
    ent_table, ent_tokens = {}, []
    rel_table, rel_tokens = {}, []
    edges = {}  # (lo, hi) entity pair -> relation id, insertion-ordered
    n_self = 0

    with open(triples_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(triples_path, lineno,
                                 f"expected 3 tab-separated fields, got {len(parts)}")
            h = _intern(parts[0], ent_table, ent_tokens)
            r = _intern(parts[1], rel_table, rel_tokens)
            t = _intern(parts[2], ent_table, ent_tokens)
            if h == t:
                n_self += 1
                continue
            key = (h, t) if h < t else (t, h)
            if key not in edges:
                edges[key] = r

    item_table, item_tokens = {}, {}
    with open(item_map_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(item_map_path, lineno,
                                 f"expected 2 tab-separated fields, got {len(parts)}")
            tok, ent_tok = parts
            ent = _intern(ent_tok, ent_table, ent_tokens)
            if tok in item_table:
                if item_table[tok] != ent:
                    raise ValidationError(
                        f"{item_map_path}:{lineno}: item '{tok}' mapped to two "
                        "different entities")
                continue
            item_table[tok] = ent
            item_tokens[tok] = None

    n_ent = len(ent_tokens)
    n_rel = len(rel_tokens)
    item_entities = np.fromiter(item_table.values(), dtype=np.int64,
                                count=len(item_table))
    if len(np.unique(item_entities)) != len(item_entities):
        raise ValidationError(f"{item_map_path}: two items map to the same entity")
    entity_is_item = np.zeros(n_ent, dtype=bool)
    entity_is_item[item_entities] = True

    # CSR assembly: each undirected edge contributes both directions.
    n_edges = len(edges)
    deg = np.zeros(n_ent, dtype=np.int64)
    for (a, b) in edges:
        deg[a] += 1
        deg[b] += 1
    indptr = np.zeros(n_ent + 1, dtype=np.int64)
    np.cumsum(deg, out=indptr[1:])
    nbr = np.empty(2 * n_edges, dtype=np.int64)
    rel = np.empty(2 * n_edges, dtype=np.int64)
    cursor = indptr[:-1].copy()
    for (a, b), r in edges.items():
        nbr[cursor[a]] = b
        rel[cursor[a]] = r
        cursor[a] += 1
        nbr[cursor[b]] = a
        rel[cursor[b]] = r
        cursor[b] += 1

    ent_idx = np.repeat(np.arange(n_ent), deg)
    rel_counts = sp.csr_matrix(
        (np.ones(2 * n_edges), (ent_idx, rel)), shape=(n_ent, n_rel))

    return KnowledgeGraph(
        n_entities=n_ent, n_relations=n_rel, n_edges=n_edges,
        indptr=indptr, nbr=nbr, rel=rel, rel_counts=rel_counts,
        item_entities=item_entities, entity_is_item=entity_is_item,
        entity_tokens=ent_tokens, relation_tokens=rel_tokens,
        item_tokens=list(item_tokens), n_self_loops_dropped=n_self)


def build_graph(n_entities, n_relations, triples, item_entities):
    """Assemble a KnowledgeGraph from in-memory (h, r, t) triples.

    Applies the same rules as the file loader: self-edges dropped, one
    relation per unordered pair with the first occurrence winning.
    """
    edges = {}
    n_self = 0
    for h, r, t in triples:
        if h == t:
            n_self += 1
            continue
        key = (h, t) if h < t else (t, h)
        if key not in edges:
            edges[key] = r

    item_entities = np.asarray(item_entities, dtype=np.int64)
    if len(np.unique(item_entities)) != len(item_entities):
        raise ValidationError("two items map to the same entity")
    entity_is_item = np.zeros(n_entities, dtype=bool)
    entity_is_item[item_entities] = True

    deg = np.zeros(n_entities, dtype=np.int64)
    for (a, b) in edges:
        deg[a] += 1
        deg[b] += 1
    indptr = np.zeros(n_entities + 1, dtype=np.int64)
    np.cumsum(deg, out=indptr[1:])
    nbr = np.empty(2 * len(edges), dtype=np.int64)
    rel = np.empty(2 * len(edges), dtype=np.int64)
    cursor = indptr[:-1].copy()
    for (a, b), r in edges.items():
        nbr[cursor[a]] = b
        rel[cursor[a]] = r
        cursor[a] += 1
        nbr[cursor[b]] = a
        rel[cursor[b]] = r
        cursor[b] += 1
    ent_idx = np.repeat(np.arange(n_entities), deg)
    rel_counts = sp.csr_matrix((np.ones(2 * len(edges)), (ent_idx, rel)),
                               shape=(n_entities, n_relations))
    return KnowledgeGraph(
        n_entities=n_entities, n_relations=n_relations, n_edges=len(edges),
        indptr=indptr, nbr=nbr, rel=rel, rel_counts=rel_counts,
        item_entities=item_entities, entity_is_item=entity_is_item,
        entity_tokens=[f"e{i}" for i in range(n_entities)],
        relation_tokens=[f"r{i}" for i in range(n_relations)],
        item_tokens=[f"i{i}" for i in range(len(item_entities))],
        n_self_loops_dropped=n_self)


def sample_neighbors(kg, e, S, rng):
    """Sample exactly S (neighbor, relation) pairs for entity e.

    Without replacement when the degree allows it, with replacement below
    that, and S copies of (e, SELF_RELATION) for isolated entities.
    """
    if S < 1:
        raise ValueError("S must be >= 1")
    lo, hi = kg.indptr[e], kg.indptr[e + 1]
    deg = hi - lo
    if deg == 0:
        return [(int(e), SELF_RELATION)] * S
    if deg < S:
        picks = rng.integers(0, deg, size=S)
    else:
        picks = rng.choice(deg, size=S, replace=False)
    idx = lo + picks
    return list(zip(kg.nbr[idx].tolist(), kg.rel[idx].tolist()))


def shortest_path_distance(kg, a, b, cap):
    """Hop count of the shortest path between entities a and b.

    Relation types are ignored; returns UNREACHABLE when no path of at most
    `cap` hops exists.
    """
    if not (0 <= a < kg.n_entities and 0 <= b < kg.n_entities):
        raise ValueError(f"entity ids out of range: {a}, {b}")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    return int(pathfind.pair_distance(kg.indptr, kg.nbr, int(a), int(b), int(cap)))


@dataclass
class ProximityResult:
    """Distance histograms for item pairs with and without a common user."""

    cap: int
    n_pairs: int
    common: np.ndarray     # counts indexed by distance 0..cap; last slot unreachable
    no_common: np.ndarray

    def probabilities(self, group):
        counts = self.common if group == "common_user" else self.no_common
        return counts / self.n_pairs

    def mean_distance(self, group):
        """Mean hop distance, counting unreachable pairs as cap + 1."""
        counts = self.common if group == "common_user" else self.no_common
        dists = np.arange(self.cap + 2)
        return float(np.dot(counts, dists) / counts.sum())

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write("group,distance,probability\n")
            for group in ("common_user", "no_common_user"):
                probs = self.probabilities(group)
                for d in range(self.cap + 1):
                    f.write(f"{group},{d},{probs[d]:.6f}\n")
                f.write(f"{group},unreachable,{probs[self.cap + 1]:.6f}\n")


def proximity_study(kg, interactions, n_pairs, rng, cap=8, max_tries=1000):
    """Compare KG distances of co-consumed vs unrelated item pairs.

    Samples `n_pairs` item pairs sharing at least one user (drawn through a
    random user with >= 2 positive items) and `n_pairs` pairs with no common
    user (rejection-sampled), then measures capped shortest-path distances.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")

    by_user = interactions.positives_by_user()
    users_with_pairs = [u for u, items in enumerate(by_user) if len(items) >= 2]
    if not users_with_pairs:
        raise ValidationError("no user has two or more positive items")
    item_users = [set() for _ in range(kg.n_items)]
    for u, items in enumerate(by_user):
        for it in items:
            item_users[it].add(u)

    common_pairs = np.empty((n_pairs, 2), dtype=np.int64)
    for i in range(n_pairs):
        u = users_with_pairs[rng.integers(0, len(users_with_pairs))]
        a, b = rng.choice(len(by_user[u]), size=2, replace=False)
        common_pairs[i, 0] = kg.item_entities[by_user[u][a]]
        common_pairs[i, 1] = kg.item_entities[by_user[u][b]]

    no_common_pairs = np.empty((n_pairs, 2), dtype=np.int64)
    n_items = kg.n_items
    for i in range(n_pairs):
        for _ in range(max_tries):
            a, b = rng.integers(0, n_items, size=2)
            if a != b and not (item_users[a] & item_users[b]):
                no_common_pairs[i, 0] = kg.item_entities[a]
                no_common_pairs[i, 1] = kg.item_entities[b]
                break
        else:
            raise ValidationError(
                "could not sample an item pair without a common user; "
                "the interaction data is too dense")

    hist = np.zeros((2, cap + 2), dtype=np.int64)
    for g, pairs in enumerate((common_pairs, no_common_pairs)):
        d = pathfind.pair_distances(kg.indptr, kg.nbr, pairs, cap)
        reach = d >= 0
        np.add.at(hist[g], d[reach], 1)
        hist[g, cap + 1] += int((~reach).sum())

    return ProximityResult(cap=cap, n_pairs=n_pairs,
                           common=hist[0], no_common=hist[1])
